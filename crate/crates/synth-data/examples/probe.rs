//! Reports reconstruction PSNR and inversion residual distributions over a
//! small corpus, for sizing tolerances.

use mapping_core::{apply_backward_mapping, invert_mapping, psnr, warp_grid_clamped, GridMapping};
use synth_data::{generate_corpus, read_dataset, CorpusParams};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let params = CorpusParams {
        count: 54,
        size: 128,
        latent_size: 32,
        seed: 4242,
        layouts: vec![],
        config_hash: None,
    };
    let t0 = std::time::Instant::now();
    generate_corpus(&params, dir.path()).unwrap();
    let gen_s = t0.elapsed().as_secs_f64();
    let records = read_dataset(dir.path()).unwrap();

    let mut psnrs = Vec::new();
    let mut residuals = Vec::new();
    for r in &records {
        let rebuilt = apply_backward_mapping(&r.warped, &r.gt_map_full, 0.0).unwrap();
        psnrs.push(psnr(&rebuilt, &r.flat, 2));
        let inv = invert_mapping(&r.gt_map_full, 100, 1e-6).unwrap();
        let trip = warp_grid_clamped(r.gt_map_full.coords(), &inv);
        let id = GridMapping::identity(128, 128);
        let mut worst = 0.0f64;
        for u in 1..127 {
            for v in 1..127 {
                for c in 0..2 {
                    worst = worst.max((trip[[u, v, c]] - id.coords()[[u, v, c]]).abs());
                }
            }
        }
        residuals.push(worst);
    }
    psnrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    residuals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "generated 54 samples in {gen_s:.1}s ({:.0} ms/sample)",
        gen_s * 1000.0 / 54.0
    );
    println!(
        "psnr  min {:.2}  p25 {:.2}  median {:.2}  max {:.2}",
        psnrs[0],
        psnrs[13],
        psnrs[27],
        psnrs[53]
    );
    println!(
        "resid min {:.2e}  median {:.2e}  max {:.2e}",
        residuals[0], residuals[27], residuals[53]
    );
}
