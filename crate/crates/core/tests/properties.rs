use approx::assert_relative_eq;
use proptest::prelude::*;

use tofcs::image::Image;
use tofcs::io::{parse_matrix, write_matrix};
use tofcs::io::pfm::{decode_pfm, encode_pfm};
use tofcs::linop::LinearOperator;
use tofcs::pipeline::metrics;
use tofcs::sensing::{circular_convolve, circular_convolve_fft, Layout, SensingMatrix};
use tofcs::solvers::{project_linf, soft_threshold, Synthesis};
use tofcs::tof::{phase_from_differences, DifferencePair};
use tofcs::transforms::{gradient, haar_forward, haar_inverse, max_haar_levels, tv_seminorm, HaarPlan, TvKind};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Geometry `(n1, w, segments, r)` with `1 <= r <= w`.
fn geometry() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..5, 1usize..10, 1usize..4).prop_flat_map(|(n1, w, segs)| (Just(n1), Just(w), Just(segs), 1..=w))
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sensing_adjoint_and_dense_agree(
        (n1, w, segs, r) in geometry(),
        p_zero in 0.0f64..0.9,
        seed in any::<u64>(),
        raw in values(4 * 9 * 3 + 4 * 9 * 3),
    ) {
        let m = SensingMatrix::generate(Layout::new(n1, w * segs, w).unwrap(), r, p_zero, 1.0, seed).unwrap();
        let (x, y) = (&raw[..m.n()], &raw[m.n()..m.n() + m.m()]);
        let mx = m.apply_forward(x).unwrap();
        let mty = m.apply_adjoint(y).unwrap();
        assert_relative_eq!(dot(&mx, y), dot(x, &mty), epsilon = 1e-12, max_relative = 1e-10);
        let dense = m.to_dense();
        let dx = &dense * nalgebra::DVector::from_column_slice(x);
        for (a, b) in dx.iter().zip(&mx) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert_eq!(m.compression_ratio(), (n1 * w * segs) as f64 / (n1 * segs * r) as f64);
    }

    #[test]
    fn fft_and_direct_convolution_agree(v in values(12), x in values(12), w in 1usize..=12) {
        let direct = circular_convolve(&v[..w], &x[..w]).unwrap();
        let fft = circular_convolve_fft(&v[..w], &x[..w]).unwrap();
        for (a, b) in direct.iter().zip(&fft) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn haar_is_invertible_and_norm_preserving(hr in 1usize..9, hc in 1usize..9, seed in any::<u64>()) {
        let (rows, cols) = (2 * hr, 2 * hc);
        let plan = HaarPlan::new(rows, cols, max_haar_levels(rows, cols)).unwrap();
        let mut s = seed;
        let x = Image::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        });
        let c = haar_forward(&plan, &x).unwrap();
        assert_relative_eq!(dot(c.as_slice(), c.as_slice()), dot(x.as_slice(), x.as_slice()), max_relative = 1e-12);
        let back = haar_inverse(&plan, &c).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn synthesis_operator_adjoint(r in 1usize..=14, seed in any::<u64>(), raw in values(2 * 28 * 28)) {
        let m = SensingMatrix::generate(Layout::new(28, 28, 14).unwrap(), r, 1.0 / 3.0, 1.0, seed).unwrap();
        let op = Synthesis::new(&m, HaarPlan::maximal(28, 28)).unwrap();
        let z = &raw[..op.input_len()];
        let y = &raw[op.input_len()..op.input_len() + op.output_len()];
        let mut az = vec![0.0; op.output_len()];
        let mut aty = vec![0.0; op.input_len()];
        op.apply(z, &mut az);
        op.apply_adjoint(y, &mut aty);
        assert_relative_eq!(dot(&az, y), dot(z, &aty), epsilon = 1e-11, max_relative = 1e-10);
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(x in values(16), t in 0.0f64..1.0) {
        let s = soft_threshold(&x, t).unwrap();
        for (a, b) in s.iter().zip(&x) {
            prop_assert!(a.abs() <= b.abs());
            prop_assert!(*a == 0.0 || a.signum() == b.signum());
            prop_assert!((b - a).abs() <= t + 1e-15);
        }
    }

    #[test]
    fn projection_is_idempotent(x in values(16), r in 0.0f64..1.5) {
        let p = project_linf(&x, r).unwrap();
        prop_assert!(p.iter().all(|v| v.abs() <= r));
        prop_assert_eq!(project_linf(&p, r).unwrap(), p);
    }

    #[test]
    fn tv_is_invariant_to_constant_shift(raw in values(30), c in -3.0f64..3.0) {
        let x = Image::from_vec(5, 6, raw).unwrap();
        let shifted = x.map(|v| v + c);
        for kind in [TvKind::Anisotropic, TvKind::Isotropic] {
            assert_relative_eq!(tv_seminorm(&x, kind), tv_seminorm(&shifted, kind), epsilon = 1e-12, max_relative = 1e-12);
        }
        prop_assert_eq!(gradient(&x).gx.len(), 30);
    }

    #[test]
    fn phase_ignores_positive_amplitude_scaling(raw in values(40), scale in 0.1f64..10.0) {
        let pair = DifferencePair {
            u: Image::from_vec(4, 5, raw[..20].to_vec()).unwrap(),
            v: Image::from_vec(4, 5, raw[20..].to_vec()).unwrap(),
        };
        let scaled = DifferencePair { u: pair.u.map(|x| x * scale), v: pair.v.map(|x| x * scale) };
        let a = phase_from_differences(&pair).unwrap();
        let b = phase_from_differences(&scaled).unwrap();
        prop_assert_eq!(&a.indeterminate, &b.indeterminate);
        for (p, q) in a.phase.as_slice().iter().zip(b.phase.as_slice()) {
            let d = (p - q).abs();
            prop_assert!(d.min(std::f64::consts::TAU - d) <= 1e-12);
        }
    }

    #[test]
    fn metrics_of_identical_images(raw in prop::collection::vec(0.1f64..3.0, 12)) {
        let d = Image::from_vec(3, 4, raw).unwrap();
        let m = metrics(&d, &d, None).unwrap();
        prop_assert_eq!(m.mae, 0.0);
        prop_assert_eq!(m.psnr, f64::INFINITY);
    }

    #[test]
    fn matrix_files_round_trip((n1, w, segs, r) in geometry(), a in 0.1f64..3.0, seed in any::<u64>()) {
        let m = SensingMatrix::generate(Layout::new(n1, w * segs, w).unwrap(), r, 0.4, a, seed).unwrap();
        let text = write_matrix(&m, &[]);
        prop_assert_eq!(parse_matrix(&text).unwrap(), m);
    }

    #[test]
    fn pfm_round_trip(raw in prop::collection::vec(-1e3f32..1e3, 1..40), cols in 1usize..8) {
        let n = raw.len() / cols * cols;
        prop_assume!(n > 0);
        let img = Image::from_vec(n / cols, cols, raw[..n].iter().map(|&v| v as f64).collect()).unwrap();
        prop_assert_eq!(decode_pfm(&encode_pfm(&img)).unwrap(), img);
    }
}
