//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng as _;

use banditmatch::datasets::{log_bandit_data, log_with_probs, simulate_feedback, LabeledExample};
use banditmatch::dialogworld::{
    compute_aggregate, enumerate_domain_goals, run_episode, ActionSet, ExpertAgent, World, WorldGenConfig, WorldSchema,
    DEFAULT_MAX_TURNS,
};
use banditmatch::fet::{
    attribution_neg, attribution_pos, confidence_mask, correct_positive_set, mc_scale, model_correctness,
    negative_thresholds, positive_thresholds, FetConfig, FetMode, FetRecord, FetState,
};
use banditmatch::nncore::{grad_check, Activation, Graph, Matrix, Mlp, MlpSpec, NodeId, ParamSet};
use banditmatch::objectives::{
    composite_loss, loss_bandit, loss_banditnet, loss_ips, loss_kl, loss_labeled, loss_pseudo, mixup, mixup_sampled,
    pi_value_estimate, sample_lambda, CompositeBatch, LossWeights,
};
use banditmatch::policy::PolicyNet;
use banditmatch::rng::{self, Rng};
use banditmatch::trainer::{build_world, compare_arms, Ablation, Arm, Comparison, ExperimentConfig, Method};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. Gradients

fn toy_net(r: &mut Rng, d: usize, c: usize) -> Mlp {
    let spec = MlpSpec {
        input_dim: d,
        hidden_dims: vec![5],
        output_dim: c,
        hidden_activation: Activation::Tanh,
    };
    let mut net = Mlp::init(spec, r).unwrap();
    for t in net.params_mut().iter_mut().filter(|t| t.name.ends_with("bias")) {
        t.values.mapv_inplace(|_| r.random_range(-0.5..0.5));
    }
    net
}

fn rand_matrix(r: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(lo..hi))
}

fn rand_mask(r: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Array2::from_shape_fn((rows, cols), |_| f64::from(u8::from(r.random_bool(0.5))))
}

fn check_loss(net: &Mlp, x: &Matrix, f: &dyn Fn(&mut Graph, NodeId) -> banditmatch::Result<NodeId>) -> f64 {
    let spec = net.spec().clone();
    grad_check(net.params(), 1e-5, |p: &ParamSet| {
        let net = Mlp::from_params(spec.clone(), p.clone())?;
        let mut g = Graph::new();
        let xs = g.constant(x.clone());
        let probs = net.forward_graph(&mut g, xs)?;
        let l = f(&mut g, probs)?;
        Ok((g, l))
    })
    .unwrap()
    .max_rel_error
}

fn check_total(net: &Mlp, batch: &CompositeBatch, weights: &LossWeights) -> f64 {
    let spec = net.spec().clone();
    grad_check(net.params(), 1e-5, |p: &ParamSet| {
        let net = Mlp::from_params(spec.clone(), p.clone())?;
        let mut g = Graph::new();
        let terms = composite_loss(&mut g, &net, batch, weights)?;
        Ok((g, terms.total))
    })
    .unwrap()
    .max_rel_error
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let names = ["labeled", "pseudo", "bandit", "kl", "total", "ips", "banditnet"];
    let mut worst = [0.0f64; 7];
    let instances = 100;
    for seed in 0..instances {
        let mut r = rng::indexed(1, "gradient-suite", seed);
        let b = r.random_range(2..=6);
        let d = r.random_range(2..=8);
        let c = r.random_range(1..=4);
        let net = toy_net(&mut r, d, c);
        let x = rand_matrix(&mut r, b, d, 0.0, 1.0);
        let targets = rand_mask(&mut r, b, c);
        let conf = rand_mask(&mut r, b, c);
        let rho = rand_matrix(&mut r, b, c, 0.1, 0.9);
        let delta: Vec<u8> = (0..b).map(|_| u8::from(r.random_bool(0.5))).collect();
        let p0 = rand_matrix(&mut r, b, c, 0.05, 0.95);
        let logged = rho.mapv(|v| f64::from(u8::from(v > 0.5)));
        let translation = r.random_range(0.0..1.0);

        let errs = [
            check_loss(&net, &x, &|g, p| loss_labeled(g, p, &targets)),
            check_loss(&net, &x, &|g, p| loss_pseudo(g, p, &conf, &targets)),
            check_loss(&net, &x, &|g, p| loss_bandit(g, p, &rho, &delta, &conf)),
            check_loss(&net, &x, &|g, p| loss_kl(g, p, &p0)),
            {
                let batch = CompositeBatch {
                    weak_positive_states: rand_matrix(&mut r, b, d, 0.0, 1.0),
                    positive_targets: targets.clone(),
                    strong_states: rand_matrix(&mut r, b, d, 0.0, 1.0),
                    conf: conf.clone(),
                    qhat: rand_mask(&mut r, b, c),
                    states: x.clone(),
                    rho: rho.clone(),
                    delta: delta.clone(),
                    unconf_plus: conf.mapv(|v| 1.0 - v),
                    probs0: p0.clone(),
                };
                let weights = LossWeights {
                    lambda_p: r.random_range(0.1..2.0),
                    lambda_b: r.random_range(0.1..2.0),
                    lambda_k: r.random_range(0.1..2.0),
                };
                check_total(&net, &batch, &weights)
            },
            check_loss(&net, &x, &|g, p| loss_ips(g, p, &rho, &logged, &delta, 1e6)),
            check_loss(&net, &x, &|g, p| loss_banditnet(g, p, &rho, &logged, &delta, translation, 1e6)),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    let elapsed = start.elapsed();
    let max = worst.iter().copied().fold(0.0, f64::max);
    let per: Vec<String> = names.iter().zip(&worst).map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        max < 1e-4 && elapsed < Duration::from_secs(60),
        format!("{instances} instances, max rel err {max:.2e} [{}], {:.1}s", per.join(", "), elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// 2. Pseudoinverse estimator against enumeration

fn subsets(c: usize) -> Vec<Vec<bool>> {
    (0..1usize << c).map(|m| (0..c).map(|k| m >> k & 1 == 1).collect()).collect()
}

fn set_prob(p: &[f64], set: &[bool]) -> f64 {
    p.iter().zip(set).map(|(&pk, &inc)| if inc { pk } else { 1.0 - pk }).product()
}

fn pi_oracle() -> Outcome {
    let c = 2;
    // Per-state logging probabilities and the expert action set.
    let states: [([f64; 2], [bool; 2]); 4] = [
        ([0.8, 0.3], [true, false]),
        ([0.35, 0.6], [false, true]),
        ([0.7, 0.9], [true, true]),
        ([0.2, 0.45], [false, false]),
    ];
    let brute: f64 = states.iter().map(|(p, truth)| set_prob(p, truth)).sum::<f64>() / states.len() as f64;

    let mut probs = Vec::new();
    let mut weights = Vec::new();
    let mut delta = Vec::new();
    for (p, truth) in &states {
        for set in subsets(c) {
            probs.extend_from_slice(p);
            weights.push(set_prob(p, &set) / states.len() as f64);
            delta.push(u8::from(set.as_slice() == truth.as_slice()));
        }
    }
    let n = weights.len();
    let probs = Array2::from_shape_vec((n, c), probs).unwrap();
    let unconf = Array2::ones((n, c));
    let est = pi_value_estimate(probs.view(), probs.view(), &delta, unconf.view(), &weights);
    let err = (est - brute).abs();
    verdict(err < 1e-9, format!("estimate {est:.12} vs enumeration {brute:.12}, |diff| {err:.1e}"))
}

// ---------------------------------------------------------------------------
// 3. Thresholding against a direct evaluation

struct Raw {
    probs: [f64; 3],
    rho: [f64; 3],
    delta: u8,
}

fn logged(rho: &[f64]) -> Vec<usize> {
    (0..rho.len()).filter(|&k| rho[k] > 0.5).collect()
}

fn fet_oracle() -> Outcome {
    let fixture = [
        Raw { probs: [0.8, 0.3, 0.6], rho: [0.9, 0.2, 0.7], delta: 1 },
        Raw { probs: [0.7, 0.55, 0.2], rho: [0.6, 0.8, 0.1], delta: 1 },
        Raw { probs: [0.6, 0.9, 0.1], rho: [0.3, 0.9, 0.4], delta: 1 },
        Raw { probs: [0.85, 0.45, 0.92], rho: [0.7, 0.4, 0.85], delta: 0 },
        Raw { probs: [0.1, 0.935, 0.35], rho: [0.2, 0.95, 0.3], delta: 0 },
    ];
    let c = 3;
    let cfg = FetConfig::default();
    let mut diffs: Vec<(&str, f64)> = Vec::new();

    // Direct evaluation.
    let pos: Vec<&Raw> = fixture.iter().filter(|r| r.delta == 1).collect();
    let neg: Vec<&Raw> = fixture.iter().filter(|r| r.delta == 0).collect();
    let dt: Vec<&Raw> = pos
        .iter()
        .copied()
        .filter(|r| (0..c).filter(|&k| r.probs[k] > 0.5).collect::<Vec<_>>() == logged(&r.rho))
        .collect();
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let want_tau_y: Vec<Option<f64>> = (0..c)
        .map(|k| mean(dt.iter().filter(|r| r.rho[k] > 0.5).map(|r| r.probs[k]).collect()))
        .collect();
    let want_tau_n: Vec<Option<f64>> = (0..c)
        .map(|k| mean(dt.iter().filter(|r| r.rho[k] <= 0.5).map(|r| r.probs[k]).collect()))
        .collect();
    let want_mc_pos: f64 = dt
        .iter()
        .map(|r| {
            let a = logged(&r.rho);
            a.iter().map(|&j| r.probs[j] / r.rho[j]).sum::<f64>() / a.len() as f64
        })
        .sum::<f64>()
        / dt.len() as f64;
    let want_attr: Vec<Vec<f64>> = neg
        .iter()
        .map(|r| {
            let a = logged(&r.rho);
            let z: f64 = a.iter().map(|&j| r.rho[j]).sum();
            a.iter().map(|&j| r.rho[j] / z).collect()
        })
        .collect();
    let want_mc_neg: f64 = neg
        .iter()
        .zip(&want_attr)
        .map(|(r, w)| {
            logged(&r.rho)
                .iter()
                .zip(w)
                .map(|(&j, wj)| wj * (1.0 - r.probs[j]) / (1.0 - r.rho[j]))
                .sum::<f64>()
        })
        .sum::<f64>()
        / neg.len() as f64;
    let clamp = |m: f64| m.clamp(0.0, 1.0 - cfg.mc_epsilon);
    let want_scale = (1.0 - clamp(want_mc_neg)) / (1.0 - clamp(want_mc_pos));
    let want_neg_y: Vec<f64> = want_tau_y
        .iter()
        .map(|t| t.map_or(cfg.fallback_tau_y, |y| (y * want_scale).clamp(0.5, 1.0)))
        .collect();
    let want_neg_n: Vec<f64> = want_tau_n
        .iter()
        .map(|t| t.map_or(cfg.fallback_tau_n, |n| (1.0 - (1.0 - n) * want_scale).clamp(0.0, 0.5)))
        .collect();

    // Library.
    let sets: Vec<ActionSet> = fixture.iter().map(|r| ActionSet::from_probs(&r.rho)).collect();
    let recs: Vec<FetRecord<'_>> = fixture
        .iter()
        .zip(&sets)
        .map(|(r, a)| FetRecord {
            probs: &r.probs,
            actions: a,
            rho: &r.rho,
        })
        .collect();
    let lib_pos: Vec<FetRecord<'_>> = recs.iter().zip(&fixture).filter(|(_, r)| r.delta == 1).map(|(x, _)| *x).collect();
    let lib_neg: Vec<FetRecord<'_>> = recs.iter().zip(&fixture).filter(|(_, r)| r.delta == 0).map(|(x, _)| *x).collect();
    let correct_idx = correct_positive_set(&lib_pos);
    let mut ok = correct_idx.len() == dt.len()
        && correct_idx
            .iter()
            .zip(&dt)
            .all(|(&i, r)| std::ptr::eq(pos[i], *r));
    let correct: Vec<FetRecord<'_>> = correct_idx.iter().map(|&i| lib_pos[i]).collect();
    let pt = positive_thresholds(&correct, c);
    let opt_diff = |a: &[Option<f64>], b: &[Option<f64>]| -> Option<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => Some((x - y).abs()),
                (None, None) => Some(0.0),
                _ => None,
            })
            .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))
    };
    match (opt_diff(&pt.tau_y, &want_tau_y), opt_diff(&pt.tau_n, &want_tau_n)) {
        (Some(a), Some(b)) => diffs.push(("tau_pos", a.max(b))),
        _ => ok = false,
    }
    let mut attr_diff = 0.0f64;
    for (r, w) in lib_neg.iter().zip(&want_attr) {
        for (&j, wj) in logged(r.rho).iter().zip(w) {
            attr_diff = attr_diff.max((attribution_neg(j, r.actions, r.rho).unwrap() - wj).abs());
        }
    }
    for r in &correct {
        let a = logged(r.rho);
        attr_diff = attr_diff.max((attribution_pos(r.actions).unwrap() - 1.0 / a.len() as f64).abs());
    }
    diffs.push(("attr", attr_diff));
    let stats = model_correctness(&correct, &lib_neg, cfg.mc_epsilon);
    diffs.push(("mc_pos", (stats.mc_pos.unwrap() - clamp(want_mc_pos)).abs()));
    diffs.push(("mc_neg", (stats.mc_neg.unwrap() - clamp(want_mc_neg)).abs()));
    let scale = mc_scale(stats.mc_pos.unwrap(), stats.mc_neg.unwrap());
    let t = negative_thresholds(&pt, Some(scale), &cfg);
    let vec_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    diffs.push(("tau_neg", vec_diff(&t.tau_neg_y, &want_neg_y).max(vec_diff(&t.tau_neg_n, &want_neg_n))));

    // A fresh smoothing state reproduces the single-batch result.
    let step = FetState::new(c, cfg, FetMode::Full).step(&lib_pos, &lib_neg);
    diffs.push((
        "step",
        vec_diff(&step.thresholds.tau_neg_y, &want_neg_y).max(vec_diff(&step.thresholds.tau_neg_n, &want_neg_n)),
    ));

    // Identity case: equal correctness leaves in-range baselines untouched.
    let id = negative_thresholds(&pt, Some(mc_scale(0.37, 0.37)), &cfg);
    let mut identity = true;
    for k in 0..c {
        if let Some(y) = pt.tau_y[k].filter(|y| (0.5..=1.0).contains(y)) {
            identity &= id.tau_neg_y[k] == y;
        }
        if let Some(n) = pt.tau_n[k].filter(|n| (0.0..=0.5).contains(n)) {
            identity &= id.tau_neg_n[k] == n;
        }
    }

    let max = diffs.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let detail: Vec<String> = diffs.iter().map(|(n, d)| format!("{n} {d:.1e}")).collect();
    verdict(
        ok && identity && max <= 1e-12,
        format!(
            "|D_T| {}/{}, scale {want_scale:.6}, max |diff| {max:.1e} [{}], identity case {}",
            dt.len(),
            pos.len(),
            detail.join(", "),
            if identity { "exact" } else { "differs" }
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Threshold invariants

struct RandRecord {
    probs: Vec<f64>,
    rho: Vec<f64>,
    actions: ActionSet,
}

fn random_record(r: &mut Rng, c: usize, agree: bool) -> RandRecord {
    let rho: Vec<f64> = (0..c).map(|_| r.random_range(0.01..0.99)).collect();
    let actions = ActionSet::from_probs(&rho);
    let probs: Vec<f64> = if agree {
        rho.iter()
            .map(|&p| if p > 0.5 { r.random_range(0.51..0.999) } else { r.random_range(0.001..0.5) })
            .collect()
    } else {
        (0..c).map(|_| r.random_range(0.001..0.999)).collect()
    };
    RandRecord { probs, rho, actions }
}

fn as_fet(recs: &[RandRecord]) -> Vec<FetRecord<'_>> {
    recs.iter()
        .map(|x| FetRecord {
            probs: &x.probs,
            actions: &x.actions,
            rho: &x.rho,
        })
        .collect()
}

fn threshold_invariants() -> Outcome {
    let cfg = FetConfig::default();
    let trials = 10_000u64;
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |what: &str, trial: u64| {
        if failures.len() < 5 {
            failures.push(format!("{what} (trial {trial})"));
        }
    };
    let mut state_by_c: Vec<Option<FetState>> = vec![None; 7];
    for trial in 0..trials {
        let mut r = rng::indexed(4, "threshold-invariants", trial);
        let c = r.random_range(1..=6);
        let n_pos = r.random_range(0..=8);
        let n_neg = r.random_range(0..=8);
        let pos: Vec<RandRecord> = (0..n_pos)
            .map(|_| {
                let agree = r.random_bool(0.6);
                random_record(&mut r, c, agree)
            })
            .collect();
        let neg: Vec<RandRecord> = (0..n_neg).map(|_| random_record(&mut r, c, false)).collect();
        let (fp, fneg) = (as_fet(&pos), as_fet(&neg));

        let state = state_by_c[c].get_or_insert_with(|| FetState::new(c, cfg, FetMode::Full));
        if r.random_bool(0.1) {
            *state = FetState::new(c, cfg, FetMode::Full);
        }
        let step = state.step(&fp, &fneg);
        let t = &step.thresholds;
        if !t.tau_neg_y.iter().all(|v| (0.5..=1.0).contains(v)) {
            fail("tau_neg_Y out of [0.5, 1]", trial);
        }
        if !t.tau_neg_n.iter().all(|v| (0.0..=0.5).contains(v)) {
            fail("tau_neg_N out of [0, 0.5]", trial);
        }

        for x in fp.iter().chain(&fneg).filter(|x| !x.actions.is_empty()) {
            let s_pos = attribution_pos(x.actions).unwrap() * x.actions.len() as f64;
            let s_neg: f64 = x.actions.iter().map(|j| attribution_neg(j, x.actions, x.rho).unwrap()).sum();
            if (s_pos - 1.0).abs() > 1e-12 || (s_neg - 1.0).abs() > 1e-12 {
                fail("attribution row does not sum to 1", trial);
            }
        }

        let rows = n_pos + n_neg;
        if rows > 0 {
            let weak = Array2::from_shape_fn((rows, c), |_| r.random_range(0.0..1.0));
            let delta: Vec<u8> = (0..rows).map(|i| u8::from(i < n_pos)).collect();
            let conf = confidence_mask(weak.view(), &delta, t);
            if (0..rows).any(|i| delta[i] == 1 && conf.row(i).iter().any(|&v| v != 0.0)) {
                fail("confident entry on a positive row", trial);
            }
        }

        let correct: Vec<FetRecord<'_>> = correct_positive_set(&fp).into_iter().map(|i| fp[i]).collect();
        let pt = positive_thresholds(&correct, c);
        let mc_pos = r.random_range(0.0..1.0 - cfg.mc_epsilon);
        let mut m = [r.random_range(0.0..1.0 - cfg.mc_epsilon), r.random_range(0.0..1.0 - cfg.mc_epsilon)];
        m.sort_by(f64::total_cmp);
        let lo = negative_thresholds(&pt, Some(mc_scale(mc_pos, m[0])), &cfg);
        let hi = negative_thresholds(&pt, Some(mc_scale(mc_pos, m[1])), &cfg);
        for k in 0..c {
            if hi.tau_neg_y[k] > lo.tau_neg_y[k] || hi.tau_neg_n[k] < lo.tau_neg_n[k] {
                fail("thresholds not monotone in mc_neg", trial);
            }
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{trials} randomized evaluations, all invariants hold")
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------
// 5. Mix-up

fn mixup_property() -> Outcome {
    let mut r = rng::stream(5, "mixup-property");
    let mut min_lambda = f64::INFINITY;
    for alpha in [0.2, 2.0] {
        for _ in 0..10_000 {
            min_lambda = min_lambda.min(sample_lambda(alpha, &mut r).unwrap());
            let a: Vec<f64> = (0..6).map(|_| r.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| r.random_range(0.0..1.0)).collect();
            let (m, l) = mixup_sampled(&a, &b, alpha, &mut r).unwrap();
            min_lambda = min_lambda.min(l);
            if m.len() != a.len() {
                return Err("mixed state has the wrong length".into());
            }
        }
    }
    let mut anchor_exact = true;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..8).map(|_| r.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| r.random_range(-3.0..3.0)).collect();
        anchor_exact &= mixup(&a, &b, 1.0).unwrap() == a;
    }
    verdict(
        min_lambda >= 0.5 && anchor_exact,
        format!("min lambda {min_lambda:.4} over 2x10000 draws per alpha, lambda=1 anchor exact: {anchor_exact}"),
    )
}

// ---------------------------------------------------------------------------
// 6 and 7. Main comparison and ablation direction

fn success(cmp: &Comparison, label: &str) -> f64 {
    cmp.get(label).unwrap().summary.success_pct.mean
}

fn f1(cmp: &Comparison, label: &str) -> f64 {
    cmp.get(label).unwrap().summary.inform_f1.mean
}

fn main_comparison() -> Result<Comparison, String> {
    let cfg = ExperimentConfig::default();
    let world = build_world(&cfg).map_err(|e| e.to_string())?;
    let arms = vec![
        Arm::Logging,
        Arm::method(Method::Ips, false, &cfg.train),
        Arm::method(Method::Banditnet, false, &cfg.train),
        Arm::method(Method::Fixmatch, false, &cfg.train),
        Arm::method(Method::Banditmatch, false, &cfg.train),
        Arm::ablation(Ablation::NoCbl, &cfg.train),
        Arm::ablation(Ablation::NoFet, &cfg.train),
    ];
    compare_arms(&world, &cfg, &arms, cfg.labeled_fraction).map_err(|e| e.to_string())
}

fn table_orderings(cmp: &Comparison, elapsed: Duration) -> Outcome {
    let (bm_s, lg_s, fm_s) = (success(cmp, "banditmatch"), success(cmp, "logging"), success(cmp, "fixmatch"));
    let (bm_f, ips_f, bn_f) = (f1(cmp, "banditmatch"), f1(cmp, "ips"), f1(cmp, "banditnet"));
    let checks = [
        (bm_s > lg_s, format!("success BM {bm_s:.1} > logging {lg_s:.1}")),
        (bm_s > fm_s, format!("success BM {bm_s:.1} > FixMatch {fm_s:.1}")),
        (bm_f > ips_f, format!("F1 BM {bm_f:.3} > IPS {ips_f:.3}")),
        (bm_f > bn_f, format!("F1 BM {bm_f:.3} > BanditNet {bn_f:.3}")),
    ];
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, s)| format!("{s} {}", if *ok { "holds" } else { "fails" }))
        .collect();
    verdict(
        checks.iter().all(|(ok, _)| *ok),
        format!("{}; {:.0}s", detail.join("; "), elapsed.as_secs_f64()),
    )
}

fn ablation_direction(cmp: &Comparison) -> Outcome {
    let (full_s, cbl_s) = (success(cmp, "banditmatch"), success(cmp, "banditmatch-no_cbl"));
    let (full_f, fet_f) = (f1(cmp, "banditmatch"), f1(cmp, "banditmatch-no_fet"));
    verdict(
        cbl_s < full_s && fet_f <= full_f,
        format!("success -CBL {cbl_s:.2} < full {full_s:.2}; F1 -FET {fet_f:.4} <= full {full_f:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 8. Feedback simulation

fn feedback_oracle() -> Outcome {
    let mut r = rng::stream(8, "feedback-oracle");
    let mut disagreements = 0;
    for _ in 0..10_000 {
        let c = r.random_range(1..=8);
        let density = r.random_range(0.0..1.0);
        let a: Vec<bool> = (0..c).map(|_| r.random_bool(density)).collect();
        let b: Vec<bool> = if r.random_bool(0.3) {
            a.clone()
        } else {
            (0..c).map(|_| r.random_bool(density)).collect()
        };
        let brute = u8::from((0..c).all(|k| a[k] == b[k]));
        let to_set = |m: &[bool]| (0..c).filter(|&k| m[k]).collect::<ActionSet>();
        if simulate_feedback(&to_set(&a), &to_set(&b)) != brute {
            disagreements += 1;
        }
    }

    // Logged records from an untrained policy and from random propensities.
    let cfg = WorldGenConfig {
        domains: vec!["hotel".into(), "restaurant".into()],
        ..WorldGenConfig::default()
    };
    let world = World::new(WorldSchema::generate(&cfg, &mut rng::stream(8, "world")).unwrap());
    let pool = banditmatch::datasets::generate_corpus(&world, &Default::default(), 30, 8).unwrap();
    let mut spec = MlpSpec::standard(world.state_dim(), world.num_actions());
    spec.hidden_dims = vec![16];
    let policy = PolicyNet::init(spec, &mut rng::stream(8, "init")).unwrap();
    let mut records = log_bandit_data(&policy, &pool).unwrap();
    let rho = Array2::from_shape_fn((pool.len(), world.num_actions()), |_| r.random_range(0.0..1.0));
    records.extend(log_with_probs(&pool, &rho).unwrap());
    let pools: Vec<&LabeledExample> = pool.iter().chain(&pool).collect();
    let mut bad_logs = 0;
    for (rec, ex) in records.iter().zip(&pools) {
        let want: Vec<usize> = (0..rec.rho.len()).filter(|&k| rec.rho[k] > 0.5).collect();
        let got: Vec<usize> = rec.actions.iter().collect();
        let want_delta = u8::from(got == ex.actions.iter().collect::<Vec<_>>());
        if got != want || rec.delta != want_delta {
            bad_logs += 1;
        }
    }
    verdict(
        disagreements == 0 && bad_logs == 0,
        format!(
            "{disagreements} disagreements on 10000 pairs; {bad_logs} of {} logged records off {{rho > 0.5}}",
            records.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Determinism of the command-line pipeline

fn run_cli(config: &Path, out_dir: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_banditmatch"))
        .arg("compare")
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!(
            "compare exited with {}: {}",
            status.status,
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    std::fs::read(out_dir.join("compare.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_cli(&config, &dir.path().join("a"))?;
    let b = run_cli(&config, &dir.path().join("b"))?;
    let rows = a.iter().filter(|&&c| c == b'\n').count();
    verdict(
        !a.is_empty() && a == b,
        format!("two compare runs on tiny.toml: {} bytes, {rows} lines, identical: {}", a.len(), a == b),
    )
}

// ---------------------------------------------------------------------------
// 10. Expert on every goal of a small world

fn expert_oracle() -> Outcome {
    let cfg = WorldGenConfig {
        domains: vec!["hotel".into()],
        entities_per_domain: 2,
        ..WorldGenConfig::default()
    };
    let schema = WorldSchema::generate(&cfg, &mut rng::stream(10, "world")).unwrap();
    let world = World::new(schema);
    let goals = enumerate_domain_goals(&world.schema, 0);
    let episodes: Vec<_> = goals
        .iter()
        .map(|g| run_episode(&world, &ExpertAgent, g, DEFAULT_MAX_TURNS))
        .collect();
    let all = episodes.iter().all(|e| e.success && e.inform_f1 == 1.0);
    let agg = compute_aggregate(&episodes).map_err(|e| e.to_string())?;
    verdict(
        all && agg.success_pct.mean == 100.0 && agg.inform_f1.mean == 1.0,
        format!(
            "{} goals, success {:.1}%, inform F1 {:.4}",
            goals.len(),
            agg.success_pct.mean,
            agg.inform_f1.mean
        ),
    )
}

// ---------------------------------------------------------------------------

fn report(n: usize, name: &str, outcome: &Outcome) {
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let mut err = std::io::stderr();
    writeln!(err, "{tag} {n:>2} {name}: {detail}").unwrap();
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| f.parse() == Ok(n));
    let mut failed = Vec::new();
    let mut run = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let out = f();
        report(n, name, &out);
        if out.is_err() {
            failed.push(n);
        }
    };

    run(1, "gradient suite", &mut gradient_suite);
    run(2, "pseudoinverse estimator oracle", &mut pi_oracle);
    run(3, "thresholding oracle", &mut fet_oracle);
    run(4, "threshold invariants", &mut threshold_invariants);
    run(5, "mix-up property", &mut mixup_property);
    if wanted(6) || wanted(7) {
        let start = Instant::now();
        match main_comparison() {
            Ok(cmp) => {
                let elapsed = start.elapsed();
                run(6, "main comparison orderings", &mut || table_orderings(&cmp, elapsed));
                run(7, "ablation direction", &mut || ablation_direction(&cmp));
            }
            Err(e) => {
                run(6, "main comparison orderings", &mut || Err(e.clone()));
                run(7, "ablation direction", &mut || Err(e.clone()));
            }
        }
    }
    run(8, "feedback simulation oracle", &mut feedback_oracle);
    run(9, "pipeline determinism", &mut determinism);
    run(10, "expert oracle", &mut expert_oracle);

    if !failed.is_empty() {
        let mut err = std::io::stderr();
        writeln!(err, "acceptance: criteria {failed:?} failed").unwrap();
        std::process::exit(1);
    }
}
