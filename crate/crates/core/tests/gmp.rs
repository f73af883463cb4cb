mod common;

use common::*;
use fgp::gmp::{
    adder_update, compound_mult_eq_update, convert, equality_update, faddeev, is_psd, matmult_update, run_rls_reference,
    Direction, GaussianMessage, Param, StateMatrix,
};
use fgp::linalg::{CMat, C64};
use fgp::rls::RlsProblem;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mc<R: Rng>(r: &mut R, n: usize) -> GaussianMessage {
    GaussianMessage::mean_cov((0..n).map(|_| cn(r, 1.0)).collect(), random_hpd(r, n, 0.3)).unwrap()
}

fn wm<R: Rng>(r: &mut R, n: usize) -> GaussianMessage {
    GaussianMessage::weighted((0..n).map(|_| cn(r, 1.0)).collect(), random_hpd(r, n, 0.3)).unwrap()
}

#[test]
fn equality_matches_gaussian_product() {
    let mut r = rng(1);
    let (x, y) = (mc(&mut r, 3), mc(&mut r, 3));
    let z = equality_update(&convert(&x, Param::WeightedMean).unwrap(), &convert(&y, Param::WeightedMean).unwrap()).unwrap();
    let z = convert(&z, Param::MeanCov).unwrap();
    // Product of two densities in covariance form.
    let (vx, vy) = (to_v(&x.cov), to_v(&y.cov));
    let g = gj_inverse(&add(&vx, &vy));
    let vz = sub(&vx, &mul(&mul(&vx, &g), &vx));
    let mz = add(&to_v(&x.mean), &mul(&mul(&vx, &g), &sub(&to_v(&y.mean), &to_v(&x.mean))));
    let want = GaussianMessage::mean_cov(from_v(&mz).as_slice().to_vec(), from_v(&vz)).unwrap();
    assert!(msg_error(&z, &want) < 1e-10, "{}", msg_error(&z, &want));
}

/// Lower-triangular `L` with `L L^H = m`.
fn cholesky(m: &CMat) -> V {
    let n = m.rows();
    let mut l = vec![vec![C64::new(0.0, 0.0); n]; n];
    for j in 0..n {
        let d = m[(j, j)].re - l[j][..j].iter().map(|z| z.norm_sqr()).sum::<f64>();
        l[j][j] = C64::new(d.sqrt(), 0.0);
        for i in j + 1..n {
            let s = m[(i, j)] - (0..j).map(|k| l[i][k] * l[j][k].conj()).sum::<C64>();
            l[i][j] = s / l[j][j];
        }
    }
    l
}

#[test]
fn adder_matches_monte_carlo_sum() {
    const N: usize = 1_000_000;
    let mut r = rng(2);
    let (x, y) = (mc(&mut r, 4), mc(&mut r, 4));
    let z = adder_update(&x, &y, false).unwrap();
    let (lx, ly) = (cholesky(&x.cov), cholesky(&y.cov));
    let mut sum = [C64::new(0.0, 0.0); 4];
    let mut outer = [[C64::new(0.0, 0.0); 4]; 4];
    for _ in 0..N {
        let wx: Vec<C64> = (0..4).map(|_| cn(&mut r, 1.0)).collect();
        let wy: Vec<C64> = (0..4).map(|_| cn(&mut r, 1.0)).collect();
        let mut s = [C64::new(0.0, 0.0); 4];
        for i in 0..4 {
            s[i] = x.mean[(i, 0)] + y.mean[(i, 0)];
            for k in 0..=i {
                s[i] += lx[i][k] * wx[k] + ly[i][k] * wy[k];
            }
        }
        for i in 0..4 {
            sum[i] += s[i];
            for j in 0..4 {
                outer[i][j] += s[i] * s[j].conj();
            }
        }
    }
    let nf = N as f64;
    let mean: Vec<C64> = sum.iter().map(|s| s / nf).collect();
    for i in 0..4 {
        let se = (z.cov[(i, i)].re / nf).sqrt();
        assert!((mean[i] - z.mean[(i, 0)]).norm() < 3.0 * se, "mean {i}");
        for j in 0..4 {
            let cov = outer[i][j] / nf - mean[i] * mean[j].conj();
            let se = (z.cov[(i, i)].re * z.cov[(j, j)].re / nf).sqrt();
            assert!((cov - z.cov[(i, j)]).norm() < 3.0 * se, "cov {i},{j}");
        }
    }
}

#[test]
fn matmult_matches_triple_product() {
    let mut r = rng(3);
    let x = mc(&mut r, 3);
    let a = random_mat(&mut r, 3, 3, 1.0);
    let y = matmult_update(&x, &StateMatrix::new(a.clone()), Direction::Forward).unwrap();
    let (av, vx) = (to_v(&a), to_v(&x.cov));
    let mut want = vec![vec![C64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    want[i][j] += av[i][k] * vx[k][l] * av[j][l].conj();
                }
            }
        }
    }
    assert!(y.cov.max_abs_diff(&from_v(&want)) < 1e-12);
}

#[test]
fn compound_matches_kalman_gain_form() {
    let mut r = rng(4);
    let (x, y) = (mc(&mut r, 4), mc(&mut r, 4));
    let a = random_mat(&mut r, 4, 4, 0.5);
    let z = compound_mult_eq_update(&x, &y, &StateMatrix::new(a.clone())).unwrap();
    let (mz, vz) = kalman_update(&x.mean, &x.cov, &y.mean, &y.cov, &a);
    assert!(z.mean.max_abs_diff(&mz) < 1e-10);
    assert!(z.cov.max_abs_diff(&vz) < 1e-10);
}

#[test]
fn faddeev_matches_direct_inverse() {
    let mut r = rng(5);
    let a = well_conditioned(&mut r, 4);
    let (b, c, d) = (random_mat(&mut r, 4, 4, 1.0), random_mat(&mut r, 4, 4, 1.0), random_mat(&mut r, 4, 4, 1.0));
    let got = faddeev(&a, &b, &c, &d).unwrap();
    let want = schur(&a, &b, &c, &d);
    assert!(frob(&got.sub(&want)) / frob(&want) < 1e-9);
}

#[test]
fn convert_round_trip() {
    let x = mc(&mut rng(6), 4);
    let back = convert(&convert(&x, Param::WeightedMean).unwrap(), Param::MeanCov).unwrap();
    assert!(msg_error(&x, &back) < 1e-10);
}

#[test]
fn noiseless_scalar_channel_converges() {
    let h = 0.7;
    let symbols = [1.0, -1.0, 0.5, 2.0, -0.25, 1.5, -2.0, 0.75];
    let rows: Vec<StateMatrix> = symbols.iter().map(|&s| StateMatrix::new(CMat::from_real(1, 1, &[s]))).collect();
    let obs: Vec<GaussianMessage> =
        symbols.iter().map(|&s| GaussianMessage::mean_cov(vec![C64::new(s * h, 0.0)], CMat::zeros(1, 1)).unwrap()).collect();
    let prior = GaussianMessage::mean_cov(vec![C64::new(0.0, 0.0)], CMat::identity(1)).unwrap();
    let noise = GaussianMessage::mean_cov(vec![C64::new(0.0, 0.0)], CMat::from_real(1, 1, &[1e-9])).unwrap();
    let post = run_rls_reference(&rows, &obs, &prior, &noise).unwrap();
    assert!((post[7].mean[(0, 0)] - C64::new(h, 0.0)).norm() < 1e-6);
    for w in post.windows(2) {
        assert!(w[1].cov[(0, 0)].re <= w[0].cov[(0, 0)].re);
    }
}

#[test]
fn two_sections_match_batch_lmmse() {
    let p = RlsProblem::generate(&mut rng(7), 4, 2, 0.1);
    let post = run_rls_reference(&p.state_matrices(), &p.observations, &p.prior, &p.noise).unwrap();
    let y: Vec<C64> = p.observations.iter().map(|o| o.mean[(0, 0)]).collect();
    let (m, v) = batch_lmmse(&p.rows, &y, &p.prior.mean, &p.prior.cov, 0.1);
    assert!(post[1].mean.max_abs_diff(&m) < 1e-8);
    assert!(post[1].cov.max_abs_diff(&v) < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compound_output_hermitian_and_reduces_covariance(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=4) {
        let mut r = rng(seed);
        let (x, y) = (mc(&mut r, n), mc(&mut r, m));
        let a = StateMatrix::new(random_mat(&mut r, m, n, 1.0));
        let z = compound_mult_eq_update(&x, &y, &a).unwrap();
        prop_assert!(z.cov.hermitian_defect() <= 1e-10);
        prop_assert!(is_psd(&x.cov.sub(&z.cov), 1e-9));
    }

    #[test]
    fn equality_commutative_and_associative(seed in any::<u64>(), n in 1usize..=4) {
        let mut r = rng(seed);
        let (a, b, c) = (wm(&mut r, n), wm(&mut r, n), wm(&mut r, n));
        let ab = equality_update(&a, &b).unwrap();
        prop_assert!(msg_error(&ab, &equality_update(&b, &a).unwrap()) <= 1e-10);
        let left = equality_update(&ab, &c).unwrap();
        let right = equality_update(&a, &equality_update(&b, &c).unwrap()).unwrap();
        prop_assert!(msg_error(&left, &right) <= 1e-10);
    }

    #[test]
    fn rls_posterior_independent_of_section_order(seed in any::<u64>(), k in 2usize..=6) {
        let p = RlsProblem::generate(&mut rng(seed), 4, k, 0.1);
        let fwd = run_rls_reference(&p.state_matrices(), &p.observations, &p.prior, &p.noise).unwrap();
        let mut order: Vec<usize> = (0..k).collect();
        order.rotate_left(1);
        order.swap(0, k - 1);
        let rows: Vec<StateMatrix> = order.iter().map(|&i| p.state_matrices()[i].clone()).collect();
        let obs: Vec<GaussianMessage> = order.iter().map(|&i| p.observations[i].clone()).collect();
        let perm = run_rls_reference(&rows, &obs, &p.prior, &p.noise).unwrap();
        prop_assert!(msg_error(fwd.last().unwrap(), perm.last().unwrap()) <= 1e-8);
    }
}
