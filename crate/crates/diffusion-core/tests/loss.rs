use diffusion_core::{diffusion_loss, loss_gradient, DiffusionError};
use mapping_core::GridMapping;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(n: usize, seed: u64) -> GridMapping {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridMapping::from_fn(n, n, |_, _| {
        (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

#[test]
fn identical_maps_have_zero_loss_and_gradient() {
    let m = random_map(7, 1);
    assert_eq!(diffusion_loss(&m, &m).unwrap(), 0.0);
    let g = loss_gradient(&m, &m, 1.0).unwrap();
    assert!(g.iter().all(|&x| x == 0.0));
}

#[test]
fn unit_offset_gives_unit_loss() {
    let m0 = random_map(5, 2);
    let off = GridMapping::from_fn(5, 5, |u, v| {
        let (x, y) = m0.at(u, v);
        (x + 1.0, y + 1.0)
    });
    let loss = diffusion_loss(&m0, &off).unwrap();
    assert!((loss - 1.0).abs() < 1e-12);
    // d/dx of mean squared error at a uniform +1 offset: 2/n per element.
    let n = (5 * 5 * 2) as f64;
    let g = loss_gradient(&m0, &off, 1.0).unwrap();
    assert!(g.iter().all(|&x| (x - 2.0 / n).abs() < 1e-15));
}

#[test]
fn matches_explicit_two_loop_oracle() {
    let m0 = random_map(9, 3);
    let pred = random_map(9, 4);
    let mut acc = 0.0;
    let mut count = 0usize;
    for u in 0..9 {
        for v in 0..9 {
            let (x0, y0) = m0.at(u, v);
            let (x1, y1) = pred.at(u, v);
            acc += (x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0);
            count += 2;
        }
    }
    let want = acc / count as f64;
    let got = diffusion_loss(&m0, &pred).unwrap();
    assert!((got - want).abs() < 1e-9, "loss {got} vs oracle {want}");
}

#[test]
fn gradient_matches_directional_finite_difference() {
    let m0 = random_map(6, 5);
    let pred = random_map(6, 6);
    let dir = random_map(6, 7);
    let g = loss_gradient(&m0, &pred, 1.0).unwrap();

    let eps = 1e-6;
    let shift = |s: f64| {
        GridMapping::from_fn(6, 6, |u, v| {
            let (x, y) = pred.at(u, v);
            let (dx, dy) = dir.at(u, v);
            (x + s * dx, y + s * dy)
        })
    };
    let fd = (diffusion_loss(&m0, &shift(eps)).unwrap()
        - diffusion_loss(&m0, &shift(-eps)).unwrap())
        / (2.0 * eps);
    let analytic: f64 = g
        .indexed_iter()
        .map(|((u, v, c), &gv)| {
            let (dx, dy) = dir.at(u, v);
            gv * if c == 0 { dx } else { dy }
        })
        .sum();
    assert!(
        (fd - analytic).abs() < 1e-8,
        "directional derivative {fd} vs analytic {analytic}"
    );
}

#[test]
fn weight_scales_the_gradient_linearly() {
    let m0 = random_map(4, 8);
    let pred = random_map(4, 9);
    let g1 = loss_gradient(&m0, &pred, 1.0).unwrap();
    let g3 = loss_gradient(&m0, &pred, 0.25).unwrap();
    for (a, b) in g1.iter().zip(g3.iter()) {
        assert!((a * 0.25 - b).abs() < 1e-15);
    }
}

#[test]
fn rejects_shape_mismatch() {
    let a = random_map(4, 10);
    let b = random_map(5, 11);
    assert!(matches!(
        diffusion_loss(&a, &b),
        Err(DiffusionError::ShapeMismatch(_))
    ));
    assert!(matches!(
        loss_gradient(&a, &b, 1.0),
        Err(DiffusionError::ShapeMismatch(_))
    ));
}
