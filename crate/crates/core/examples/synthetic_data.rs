//! Writes the synthetic datasets used by the bundled run configs:
//! `gaussian.csv` (20 points in 2-D) and `kidscore.csv` (100 mother/child
//! score pairs, free coordinates only).
//!
//! Usage: cargo run --release --example synthetic_data -- <output dir>

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use score_recon::measures::Dataset;
use score_recon::verify::kidscore_dataset;
use score_recon::DataPoint;

fn main() -> score_recon::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs/data".into()));
    std::fs::create_dir_all(&dir).map_err(|e| score_recon::Error::Io { path: dir.clone(), source: e })?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gaussian = Dataset {
        names: vec!["a".into(), "b".into()],
        points: (0..20)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                DataPoint::new(vec![1.0 + a, -2.0 + b])
            })
            .collect::<score_recon::Result<_>>()?,
    };
    gaussian.save(&dir.join("gaussian.csv"))?;

    let kid = Dataset {
        names: vec!["mom_iq".into(), "kid_score".into()],
        points: kidscore_dataset(100, 11)?
            .into_iter()
            .map(|p| DataPoint::new(p.coords()[1..].to_vec()))
            .collect::<score_recon::Result<_>>()?,
    };
    kid.save(&dir.join("kidscore.csv"))?;
    println!("wrote {} and {}", dir.join("gaussian.csv").display(), dir.join("kidscore.csv").display());
    Ok(())
}
