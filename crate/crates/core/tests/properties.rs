//! Randomized invariants across geometry, kernel, covariance and line search.

mod common;

use std::collections::HashSet;

use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scaffold_core::deformation::{
    build_covariance, extract_fields, pivoted_cholesky, CovarianceAccessor,
};
use scaffold_core::geometry::{generate_primitive, GeometryFile, PolynomialSurface, Primitive};
use scaffold_core::homogenization::ShapeSensitivity;
use scaffold_core::kernel::{read_coefficients, write_coefficients};
use scaffold_core::optimizer::{line_search, LineSearchParams};

fn primitive_strategy() -> impl Strategy<Value = Primitive> {
    prop_oneof![
        (0.05..0.4f64).prop_map(|radius| Primitive::Sphere { center: [0.0; 3], radius }),
        (0.05..0.3f64).prop_map(|half_width| Primitive::Cube { center: [0.0; 3], half_width }),
        (0.05..0.25f64).prop_map(|half_width| Primitive::RotatedCube { center: [0.0; 3], half_width, rotation: None }),
        Just(Primitive::two_body()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn elements_tile_every_patch(prim in primitive_strategy(), j in 0u32..5) {
        let maps = generate_primitive(&prim).unwrap();
        let s = PolynomialSurface::from_maps(&maps, j, (1, 1)).unwrap();
        let n = 1usize << j;
        prop_assert_eq!(s.element_count(), maps.len() * n * n);
        let mut seen = HashSet::new();
        for e in 0..s.element_count() {
            let (patch, k, kp) = s.grid().element_position(e);
            prop_assert!(k < n && kp < n && patch < maps.len());
            prop_assert_eq!(s.grid().element_index(patch, k, kp), e);
            prop_assert!(seen.insert((patch, k, kp)));
        }
    }

    #[test]
    fn every_component_is_outward(prim in primitive_strategy(), j in 1u32..4) {
        let s = common::surface(&prim, j);
        for v in s.component_volumes() {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn kernel_is_even_and_periodic(x in -0.5..0.5f64, y in -0.5..0.5f64, z in -0.5..0.5f64, shift in prop::array::uniform3(-2i32..3)) {
        let k = common::kernel();
        let p = Vector3::new(x, y, z);
        prop_assume!(p.norm() > 1e-3);
        let (v, g) = k.eval_with_gradient(&p).unwrap();
        let (vm, gm) = k.eval_with_gradient(&(-p)).unwrap();
        prop_assert!((v - vm).abs() <= 1e-9 * (1.0 + v.abs()));
        prop_assert!((g + gm).amax() <= 1e-7 * (1.0 + g.amax()));
        let q = p + Vector3::new(shift[0] as f64, shift[1] as f64, shift[2] as f64);
        let (vs, gs) = k.eval_with_gradient(&q).unwrap();
        prop_assert!((vs - v).abs() <= 1e-9 * (1.0 + v.abs()));
        prop_assert!((gs - g).amax() <= 1e-7 * (1.0 + g.amax()));
    }

    #[test]
    fn kernel_laplacian_is_one(x in -0.45..0.45f64, y in -0.45..0.45f64, z in -0.45..0.45f64) {
        // 1/(4 pi r) is harmonic, so the smooth remainder carries the whole Laplacian
        let k = common::kernel();
        let p = Vector3::new(x, y, z);
        let h = 1e-3;
        let mut lap = -6.0 * k.smooth_remainder(&p).0;
        for d in 0..3 {
            let e = Vector3::ith(d, h);
            lap += k.smooth_remainder(&(p + e)).0 + k.smooth_remainder(&(p - e)).0;
        }
        prop_assert!((lap / (h * h) - 1.0).abs() < 1e-4, "{}", lap / (h * h));
    }

    #[test]
    fn smooth_remainder_is_bounded_through_the_origin(dir in prop::array::uniform3(-1.0..1.0f64), r in 1e-8..0.2f64) {
        let d = Vector3::from(dir);
        prop_assume!(d.norm() > 0.1);
        let z = d.normalize() * r;
        let (v, g) = common::kernel().smooth_remainder(&z);
        let (v0, _) = common::kernel().smooth_remainder(&(d.normalize() * 1e-9));
        // the remainder is smooth, so it changes at most linearly away from the origin
        prop_assert!((v - v0).abs() <= 2.0 * r * (1.0 + g.norm()));
        prop_assert!(g.norm() < 1.0);
    }

    #[test]
    fn pivoted_cholesky_interpolates_on_pivots(
        pts in prop::collection::vec(prop::array::uniform3(-0.4..0.4f64), 2..25),
        length in 0.05..2.0f64,
    ) {
        let points: Vec<Vector3<f64>> = pts.into_iter().map(Vector3::from).collect();
        let c = build_covariance(&points, length).unwrap();
        let f = pivoted_cholesky(&c, 1e-10, c.dim()).unwrap();
        let llt = &f.l * f.l.transpose();
        for &p in &f.pivots {
            prop_assert!(f.residual_diagonal[p].abs() <= 1e-12);
            for &q in &f.pivots {
                prop_assert!((llt[(p, q)] - c.entry(p, q)).abs() <= 1e-12);
            }
        }
        prop_assert!(f.residual_diagonal.iter().all(|&d| d >= -1e-10));
        let rank = f.rank();
        let fields = extract_fields(&f, rank.min(6)).unwrap();
        for pair in fields.windows(2) {
            prop_assert!(pair[0].eigenvalue >= pair[1].eigenvalue);
        }
        // tiny eigenvalues are only accurate relative to the largest one
        let floor = 1e-13 * fields[0].eigenvalue * c.dim() as f64;
        for v in &fields {
            prop_assert!(v.eigenvalue >= 0.0);
            let n2 = v.flat().norm_squared();
            prop_assert!((n2 - v.eigenvalue).abs() <= 1e-8 * v.eigenvalue + floor);
            let flat = v.flat();
            let residual = &f.l * f.l.tr_mul(&flat) - &flat * v.eigenvalue;
            prop_assert!(residual.norm() <= 1e-8 * fields[0].eigenvalue * flat.norm().max(1e-300));
        }
    }

    #[test]
    fn generic_accessor_low_rank_is_recovered(seed in any::<u64>(), rank in 1usize..5) {
        struct Dense(DMatrix<f64>);
        impl CovarianceAccessor for Dense {
            fn dim(&self) -> usize { self.0.nrows() }
            fn entry(&self, i: usize, j: usize) -> f64 { self.0[(i, j)] }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(12, rank, |_, _| rng.gen_range(-1.0..1.0));
        let c = Dense(&b * b.transpose());
        let f = pivoted_cholesky(&c, 1e-12, 12).unwrap();
        prop_assert!(f.rank() <= rank);
        prop_assert!((&f.l * f.l.transpose() - &c.0).amax() <= 1e-9);
    }

    #[test]
    fn line_search_decreases_convex_quadratics(a in 0.1..10.0f64, c in 1e-3..5.0f64, t0 in 1e-3..3.0f64) {
        let phi = |t: f64| a * (t - c).powi(2);
        let j0 = phi(0.0);
        let mut calls = Vec::new();
        let out = line_search(j0, t0, &LineSearchParams::default(), |t| {
            calls.push(t);
            Ok(Some(phi(t)))
        })
        .unwrap();
        prop_assert!(out.j < j0);
        prop_assert!((out.j - phi(out.t)).abs() <= 1e-12 * (1.0 + j0));
        // no accepted point is worse than any probe that was evaluated inside (0, 2 t0]
        for &t in calls.iter().filter(|&&t| t >= t0) {
            prop_assert!(out.j <= phi(t) + 1e-12 * (1.0 + j0));
        }
        if c <= 2.0 * t0 {
            prop_assert!((out.t - c).abs() <= 1e-9 * (1.0 + c));
        }
    }

    #[test]
    fn kernel_cache_round_trips_bitwise(scale in -1e3..1e3f64) {
        let mut coeffs = common::kernel().coefficients().clone();
        for a in coeffs.alpha.iter_mut() {
            *a *= scale;
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        write_coefficients(&path, &coeffs).unwrap();
        let back = read_coefficients(&path).unwrap();
        prop_assert!(coeffs.alpha.iter().zip(&back.alpha).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn geometry_files_round_trip(prim in primitive_strategy(), j in 1u32..4) {
        let s = common::surface(&prim, j);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        GeometryFile::from_surface(&s).write(&path).unwrap();
        let back = GeometryFile::read(&path).unwrap();
        prop_assert_eq!(&back, &GeometryFile::from_surface(&s));
        let again = PolynomialSurface::from_maps(&back.to_maps().unwrap(), j, s.degree()).unwrap();
        prop_assert_eq!(again.points(), s.points());
    }
}

#[test]
fn normals_are_unit_and_orthogonal_at_a_million_samples() {
    let surfaces = [
        common::sphere(0.3, 3),
        common::rotated_cube(0.15, 2),
        common::surface(&Primitive::two_body(), 2),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..1_000_000 {
        let s = &surfaces[k % surfaces.len()];
        let e = rng.gen_range(0..s.element_count());
        let smp = s.sample(e, rng.gen(), rng.gen()).unwrap();
        let n = smp.normal;
        worst = worst
            .max((n.norm() - 1.0).abs())
            .max(n.dot(&smp.du).abs() / smp.du.norm())
            .max(n.dot(&smp.dv).abs() / smp.dv.norm());
    }
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn sphere_volume_converges_at_the_interpolation_rate() {
    let r = 0.3;
    let exact = 4.0 * std::f64::consts::PI * r * r * r / 3.0;
    let maps = generate_primitive(&Primitive::Sphere { center: [0.0; 3], radius: r }).unwrap();
    for p in [2usize, 4] {
        let start = if p == 2 { 1 } else { 2 };
        let errs: Vec<f64> = (start..start + 3)
            .map(|j| {
                let s = PolynomialSurface::from_maps(&maps, j, (p, p)).unwrap();
                (s.cavity_volume().unwrap() - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio >= (1 << p) as f64 / 2.0, "p = {p}: {errs:?}");
        }
    }
}

#[test]
fn shape_derivative_is_exactly_symmetric_for_random_fields() {
    let s = common::sphere(0.25, 1);
    let sol = common::solve(&s);
    let sens = ShapeSensitivity::new(&s, &sol).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let v: Vec<Vector3<f64>> = s
            .points()
            .iter()
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let d = sens.apply(&v).unwrap();
        assert_eq!(d, d.transpose());
    }
}
