//! Certification of every hand-derived gradient against the central
//! finite-difference oracle, on random instances with preactivations bounded
//! away from nondifferentiable points.

use nalgebra::{DMatrix, DVector};
use plateau_core::data::{compute_stats, Dataset, LossModel};
use plateau_core::net::{grad_fd, ActivationKind, OutMap, SkipPattern};
use plateau_core::{grad, ActivationKind as Kind, Gradient, UnitLayerNet, UnitParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FD_STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-6;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_net(kind: &ActivationKind, h: usize, rng: &mut ChaCha8Rng) -> UnitLayerNet {
    let units = (0..h)
        .map(|_| UnitParams::new(randn(rng, kind.n_v()), randn(rng, kind.n_u())))
        .collect();
    UnitLayerNet::new(kind.clone(), units, OutMap::Identity).unwrap()
}

fn random_vector_data(kind: &ActivationKind, p: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let d = kind.input_dim();
    let n_out = kind.output_dim();
    let xs: Vec<DVector<f64>> = (0..p).map(|_| randn(rng, d)).collect();
    let ys: Vec<DVector<f64>> = (0..p).map(|_| randn(rng, n_out)).collect();
    Dataset::from_vectors(xs, ys, "random")
}

fn max_rel_error(a: &Gradient, b: &Gradient) -> f64 {
    let mut worst: f64 = 0.0;
    let scale = a.norm().max(b.norm()).max(1e-12);
    for (ga, gb) in a.units.iter().zip(b.units.iter()) {
        for (x, y) in ga.v.iter().zip(gb.v.iter()) {
            worst = worst.max((x - y).abs() / scale);
        }
        for (x, y) in ga.u.iter().zip(gb.u.iter()) {
            worst = worst.max((x - y).abs() / scale);
        }
    }
    for (ma, mb) in a.out.iter().zip(b.out.iter()) {
        for (x, y) in ma.iter().zip(mb.iter()) {
            worst = worst.max((x - y).abs() / scale);
        }
    }
    worst
}

fn check_kind(kind: ActivationKind, instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relu_like = !kind.is_smooth();
    let mut done = 0;
    while done < instances {
        let net = random_net(&kind, 3, &mut rng);
        let data = random_vector_data(&kind, 5, &mut rng);
        if relu_like {
            // keep preactivations at least 10·h away from the kink
            let mut ok = true;
            'outer: for x in &data.inputs {
                let x = x.as_vector().unwrap();
                for unit in &net.units {
                    if kind.is_conv() {
                        for w in 0..kind.input_dim() / 2 {
                            let z = unit.u[0] * x[2 * w] + unit.u[1] * x[2 * w + 1];
                            if z.abs() < 10.0 * FD_STEP {
                                ok = false;
                                break 'outer;
                            }
                        }
                    } else if unit.u.dot(x).abs() < 10.0 * FD_STEP {
                        ok = false;
                        break 'outer;
                    }
                }
            }
            if !ok {
                continue;
            }
        }
        let model = LossModel::Data(&data);
        let analytic = grad(&net, &model).unwrap();
        let numeric = grad_fd(&net, &model, FD_STEP).unwrap();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < REL_TOL, "{}: relative error {err:.3e}", kind.name());
        done += 1;
    }
}

#[test]
fn linear_fc_gradients() {
    check_kind(Kind::LinearFc { input_dim: 3, output_dim: 2 }, 10, 1);
}

#[test]
fn relu_fc_gradients_away_from_kinks() {
    check_kind(Kind::ReluFc { input_dim: 3, output_dim: 2 }, 10, 2);
}

#[test]
fn conv_linear_gradients() {
    check_kind(Kind::Conv1dLinear { input_dim: 4 }, 10, 3);
}

#[test]
fn conv_relu_gradients_away_from_kinks() {
    check_kind(Kind::Conv1dRelu { input_dim: 4 }, 10, 4);
}

#[test]
fn quadratic_gradients() {
    check_kind(Kind::QuadraticFc { input_dim: 3 }, 10, 5);
}

#[test]
fn cubic_gradients() {
    check_kind(Kind::PolyFc { input_dim: 3, degree: 3 }, 10, 6);
}

#[test]
fn tanh_gradients() {
    check_kind(Kind::TanhFc { input_dim: 3 }, 10, 7);
}

#[test]
fn sigmoid_gradients() {
    check_kind(Kind::SigmoidFc { input_dim: 3 }, 10, 8);
}

#[test]
fn sin_gradients() {
    check_kind(Kind::SinFc { input_dim: 3 }, 10, 9);
}

#[test]
fn ztanh_gradients() {
    check_kind(Kind::ZTanhFc { input_dim: 3 }, 10, 10);
}

#[test]
fn attention_gradients() {
    let kind = Kind::LinearAttention { embed_dim: 2, context_len: 4, head_rank: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let net = random_net(&kind, 2, &mut rng);
        let xs: Vec<DMatrix<f64>> = (0..4)
            .map(|_| {
                let mut x = DMatrix::from_fn(3, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
                x[(2, 4)] = 0.0; // query label slot
                x
            })
            .collect();
        let ys: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset::from_tokens(xs, ys, "random-attn");
        let model = LossModel::Data(&data);
        let analytic = grad(&net, &model).unwrap();
        let numeric = grad_fd(&net, &model, FD_STEP).unwrap();
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < REL_TOL, "attention: relative error {err:.3e}");
    }
}

#[test]
fn attention_gradients_rank_two_heads() {
    let kind = Kind::LinearAttention { embed_dim: 2, context_len: 3, head_rank: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let net = random_net(&kind, 2, &mut rng);
    let xs: Vec<DMatrix<f64>> = (0..3)
        .map(|_| {
            let mut x = DMatrix::from_fn(3, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
            x[(2, 3)] = 0.0;
            x
        })
        .collect();
    let ys: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset::from_tokens(xs, ys, "random-attn");
    let model = LossModel::Data(&data);
    let err = max_rel_error(&grad(&net, &model).unwrap(), &grad_fd(&net, &model, FD_STEP).unwrap());
    assert!(err < REL_TOL, "rank-2 attention: relative error {err:.3e}");
}

#[test]
fn linear_chain_gradients() {
    let kind = Kind::LinearFc { input_dim: 2, output_dim: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let units = (0..3)
        .map(|_| UnitParams::new(randn(&mut rng, 4), randn(&mut rng, 2)))
        .collect();
    let mats = vec![
        DMatrix::from_fn(3, 4, |_, _| rng.sample::<f64, _>(StandardNormal)),
        DMatrix::from_fn(2, 3, |_, _| rng.sample::<f64, _>(StandardNormal)),
    ];
    let net = UnitLayerNet::new(kind.clone(), units, OutMap::LinearChain { mats }).unwrap();
    let xs: Vec<DVector<f64>> = (0..5).map(|_| randn(&mut rng, 2)).collect();
    let ys: Vec<DVector<f64>> = (0..5).map(|_| randn(&mut rng, 2)).collect();
    let data = Dataset::from_vectors(xs, ys, "random");
    let model = LossModel::Data(&data);
    let err = max_rel_error(&grad(&net, &model).unwrap(), &grad_fd(&net, &model, FD_STEP).unwrap());
    assert!(err < REL_TOL, "chain: relative error {err:.3e}");
}

#[test]
fn skip_linear_gradients_all_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for pattern in [SkipPattern::None, SkipPattern::Skip1, SkipPattern::Skip2] {
        let h = 5;
        let kind = Kind::LinearFc { input_dim: 2, output_dim: h };
        let units = (0..h)
            .map(|_| UnitParams::new(randn(&mut rng, h), randn(&mut rng, 2)))
            .collect();
        let w3 = DMatrix::from_fn(h, h, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w4 = DMatrix::from_fn(2, h, |_, _| rng.sample::<f64, _>(StandardNormal));
        let net = UnitLayerNet::new(kind, units, OutMap::SkipLinear { w3, w4, pattern }).unwrap();
        let xs: Vec<DVector<f64>> = (0..5).map(|_| randn(&mut rng, 2)).collect();
        let ys: Vec<DVector<f64>> = (0..5).map(|_| randn(&mut rng, 2)).collect();
        let data = Dataset::from_vectors(xs, ys, "random");
        let model = LossModel::Data(&data);
        let err =
            max_rel_error(&grad(&net, &model).unwrap(), &grad_fd(&net, &model, FD_STEP).unwrap());
        assert!(err < REL_TOL, "skip {pattern:?}: relative error {err:.3e}");
    }
}

#[test]
fn linear_stats_gradient_matches_dataset_gradient() {
    // Eq.-9 form: ∂L/∂v_i = −(Σ_yz − W Σ_zz) u_i entrywise
    let kind = Kind::LinearFc { input_dim: 2, output_dim: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let net = random_net(&kind, 4, &mut rng);
    let data = random_vector_data(&kind, 64, &mut rng);
    let stats = compute_stats(&data, &kind).unwrap();
    let g_data = grad(&net, &LossModel::Data(&data)).unwrap();
    let g_stats = grad(&net, &LossModel::LinearStats(&stats)).unwrap();
    let err = max_rel_error(&g_data, &g_stats);
    assert!(err < 1e-10, "stats vs dataset gradient: {err:.3e}");
    // explicit formula check
    let syz = stats.sigma_yz.as_ref().unwrap();
    let szz = stats.sigma_zz.as_ref().unwrap();
    let r = syz - net.weight_matrix() * szz;
    for (unit, gu) in net.units.iter().zip(g_stats.units.iter()) {
        let expect = -(&r * &unit.u);
        assert!((expect - &gu.v).norm() < 1e-12);
    }
}

#[test]
fn quad_stats_gradient_matches_dataset_gradient() {
    // the statistics-driven quadratic flow evaluated on empirical moments
    // agrees with the per-sample gradient (independent contraction route)
    let kind = Kind::QuadraticFc { input_dim: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let net = random_net(&kind, 2, &mut rng);
    let data = random_vector_data(&kind, 3, &mut rng);
    let stats = compute_stats(&data, &kind).unwrap();
    let g_data = grad(&net, &LossModel::Data(&data)).unwrap();
    let g_stats = grad(&net, &LossModel::QuadStats(&stats)).unwrap();
    let err = max_rel_error(&g_data, &g_stats);
    assert!(err < 1e-10, "quad stats vs dataset gradient: {err:.3e}");
    // and both match finite differences of the stats-driven loss
    let fd = grad_fd(&net, &LossModel::QuadStats(&stats), FD_STEP).unwrap();
    assert!(max_rel_error(&g_stats, &fd) < REL_TOL);
}

#[test]
fn zero_network_zero_data_has_zero_gradient() {
    let kind = Kind::LinearFc { input_dim: 2, output_dim: 1 };
    let net = UnitLayerNet::zeros(kind, 3).unwrap();
    let data = Dataset::from_vectors(
        vec![DVector::zeros(2), DVector::zeros(2)],
        vec![DVector::zeros(1), DVector::zeros(1)],
        "zero",
    );
    let g = grad(&net, &LossModel::Data(&data)).unwrap();
    assert_eq!(g.norm(), 0.0);
    let fd = grad_fd(&net, &LossModel::Data(&data), FD_STEP).unwrap();
    assert_eq!(fd.norm(), 0.0);
}

#[test]
fn empty_dataset_is_invalid_input() {
    let kind = Kind::LinearFc { input_dim: 2, output_dim: 1 };
    let net = UnitLayerNet::zeros(kind, 1).unwrap();
    let data = Dataset::from_vectors(vec![], vec![], "empty");
    assert!(plateau_core::loss(&net, &LossModel::Data(&data)).is_err());
}
