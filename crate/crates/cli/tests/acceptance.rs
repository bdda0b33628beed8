//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p neutrality-kit --test acceptance`.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;

use neutrality_core::alignment::{classify_sites, pair_diff_count};
use neutrality_core::estimators::{t2, T2Normalization};
use neutrality_core::fixtures;
use neutrality_core::inference::{
    frequency_shift_from_vectors, jackknife_from_mismatches, replicate_rng, tn_pvalue,
    PairwiseMismatches, Sidedness,
};
use neutrality_core::model::{IndependentSitesModel, MarkovSitesModel, ModelSpec, SiteModel};
use neutrality_core::oracle::{enumerated_moments, MAX_OUTCOMES};
use neutrality_core::simulator::{
    clt_study, power_study, rate_study, sample_rows, Alternative, PowerConfig, RateConfig,
    SimConfig, Statistic,
};
use neutrality_core::ustat::{
    eh1_4, eh1_4_independent, eh2_2, exact_var_t2, expected_hk, fourth_moment_terms, h1, h2,
    kernel_phi, sigma1_sq, sigma1_sq_general,
};
use neutrality_core::Alignment;

type Check = Box<dyn FnOnce(&mut Vec<String>) -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dirichlet(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..c).map(|_| -(1.0f64 - rng.random::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn random_independent(rng: &mut impl Rng, c: usize, k: usize) -> IndependentSitesModel {
    IndependentSitesModel::new((0..k).map(|_| dirichlet(rng, c)).collect()).unwrap()
}

fn random_markov(rng: &mut impl Rng, c: usize, k: usize) -> MarkovSitesModel {
    let pi0 = dirichlet(rng, c);
    let p = (0..c).map(|_| dirichlet(rng, c)).collect();
    MarkovSitesModel::new(pi0, p, k).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let a = Alignment::from_fasta_str(fixtures::WORKED_FASTA).unwrap();
    let cls = classify_sites(&a);
    let diffs: Vec<u64> = (0..a.sites()).map(|k| pair_diff_count(&a.column_counts(k))).collect();
    let singletons: Vec<usize> = cls.singleton_sites().iter().map(|&k| a.original_columns()[k]).collect();
    let t2s = t2(&a, T2Normalization::PerSegregatingSite).unwrap().value;
    let elapsed = t.elapsed();
    let pass = cls.segregating == 16
        && diffs == fixtures::WORKED_PAIR_DIFFS
        && t2s == 4.9375
        && singletons == fixtures::WORKED_SINGLETONS
        && elapsed < Duration::from_secs(1);
    outcome(
        pass,
        format!("S = {}, T2 per segregating site = {t2s}, S* = {}, {elapsed:.2?}", cls.segregating, singletons.len()),
    )
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let turtle = frequency_shift_from_vectors(&fixtures::TURTLE_SEGREGATING, &fixtures::TURTLE_NON_SEGREGATING)
        .unwrap()
        .value;
    let hiv = frequency_shift_from_vectors(&fixtures::HIV_SEGREGATING, &fixtures::HIV_NON_SEGREGATING)
        .unwrap()
        .value;
    let elapsed = t.elapsed();
    let pass = (turtle + 0.4615).abs() < 1e-4 && (hiv + 0.0804).abs() < 1e-4 && elapsed < Duration::from_secs(1);
    outcome(pass, format!("turtle {turtle:.6}, HIV {hiv:.6}"))
}

fn criterion_3() -> Outcome {
    let p = tn_pvalue(-9.14, Sidedness::Left);
    let mut ok = (2e-20..=5e-20).contains(&p);
    let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.025).collect();
    for w in grid.windows(2) {
        ok &= tn_pvalue(w[0], Sidedness::Left) <= tn_pvalue(w[1], Sidedness::Left);
        ok &= tn_pvalue(w[0], Sidedness::Right) >= tn_pvalue(w[1], Sidedness::Right);
    }
    for &t in &grid {
        let (l, r) = (tn_pvalue(t, Sidedness::Left), tn_pvalue(t, Sidedness::Right));
        ok &= tn_pvalue(-t, Sidedness::Left) == r;
        ok &= tn_pvalue(t, Sidedness::Two) == (2.0 * l.min(r)).min(1.0);
        ok &= tn_pvalue(t, Sidedness::Two) == tn_pvalue(-t, Sidedness::Two);
    }
    ok &= tn_pvalue(0.0, Sidedness::Two) == 1.0;
    ok &= (tn_pvalue(1.959964, Sidedness::Two) - 0.05).abs() < 1e-6;
    outcome(ok, format!("P(Z < -9.14) = {p:.4e}"))
}

fn criterion_4(notes: &mut Vec<String>) -> Outcome {
    let t = Instant::now();
    let mut rng = replicate_rng(404, 0);
    let mut worst = 0.0f64;
    let mut models = 0;
    let mut printed_worst = 0.0f64;
    let tol = 1e-12;
    let mut pass = true;
    for c in 2..=4usize {
        let mut k = 1;
        while c.pow(k as u32) <= MAX_OUTCOMES {
            for rep in 0..2 {
                // independent sites: reduced forms, and the general path on the same model
                let m = random_independent(&mut rng, c, k);
                let e = enumerated_moments(&m).unwrap();
                let got = [
                    expected_hk(&m),
                    sigma1_sq(&m),
                    sigma1_sq_general(&m),
                    eh1_4_independent(&m),
                    eh2_2(&m),
                ];
                let want = [e.h_k, e.sigma1_sq, e.sigma1_sq, e.eh1_4, e.eh2_2];
                if k <= 6 {
                    let general = fourth_moment_terms(&m).unwrap().combine();
                    pass &= close(general, e.eh1_4, tol);
                    worst = worst.max((general - e.eh1_4).abs());
                }
                for (g, w) in got.iter().zip(&want) {
                    pass &= close(*g, *w, tol);
                    worst = worst.max((g - w).abs());
                }
                // Markov chain: general dependent-site forms
                let mk = random_markov(&mut rng, c, k);
                let e = enumerated_moments(&mk).unwrap();
                let terms = fourth_moment_terms(&mk).unwrap();
                let got = [expected_hk(&mk), sigma1_sq(&mk), eh1_4(&mk).unwrap(), eh2_2(&mk)];
                let want = [e.h_k, e.sigma1_sq, e.eh1_4, e.eh2_2];
                for (g, w) in got.iter().zip(&want) {
                    pass &= close(*g, *w, tol);
                    worst = worst.max((g - w).abs());
                }
                if rep == 0 {
                    let dev = (terms.combine_as_printed() - e.eh1_4).abs() / e.eh1_4.max(1e-300);
                    printed_worst = printed_worst.max(dev);
                }
                models += 2;
            }
            k += 1;
        }
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    notes.push(format!(
        "note 4: the fourth-moment expansion with its coefficients read literally (4(K-2)+3 on the k,k,k,l group) \
         deviates from enumeration on Markov models by up to {:.1}% relative; the shipped general form uses the multinomial weights 1,3,4,6,1",
        100.0 * printed_worst
    ));
    outcome(pass, format!("{models} models with C^K <= {MAX_OUTCOMES}, max |closed - enumerated| = {worst:.2e}, {elapsed:.1?}"))
}

fn criterion_5() -> Outcome {
    let mut rng = replicate_rng(505, 0);
    let mut worst = 0.0f64;
    for draw in 0..10_000 {
        let c = rng.random_range(2..=4usize);
        let k = rng.random_range(1..=20usize);
        let model: Box<dyn SiteModel> = if draw % 2 == 0 {
            Box::new(random_independent(&mut rng, c, k))
        } else {
            Box::new(random_markov(&mut rng, c, k))
        };
        let x1: Vec<u8> = (0..k).map(|_| rng.random_range(0..c as u8)).collect();
        let x2: Vec<u8> = (0..k).map(|_| rng.random_range(0..c as u8)).collect();
        let phi = kernel_phi(&x1, &x2).unwrap();
        let hk = expected_hk(model.as_ref());
        // h2 from its per-site expression, independent of the library's remainder definition
        let kf = k as f64;
        let per_site: f64 = (0..k)
            .map(|s| {
                let pi = model.marginals(s);
                let hom: f64 = pi.iter().map(|p| p * p).sum();
                let neq = (x1[s] != x2[s]) as u8 as f64;
                neq - 1.0 + pi[x1[s] as usize] + pi[x2[s] as usize] - hom
            })
            .sum::<f64>()
            / kf;
        let lib_h2 = h2(&x1, &x2, model.as_ref()).unwrap();
        let lhs = hk + h1(&x1, model.as_ref()).unwrap() + h1(&x2, model.as_ref()).unwrap() + per_site;
        worst = worst.max((phi - lhs).abs()).max((lib_h2 - per_site).abs());
    }
    let mut cond_worst = 0.0f64;
    for c in 2..=4usize {
        for k in 1..=3usize {
            for m in [
                Box::new(random_independent(&mut rng, c, k)) as Box<dyn SiteModel>,
                Box::new(random_markov(&mut rng, c, k)),
            ] {
                let e = enumerated_moments(m.as_ref()).unwrap();
                cond_worst = cond_worst.max(e.max_conditional_h2).max(e.mean_h1);
            }
        }
    }
    outcome(
        worst <= 1e-12 && cond_worst <= 1e-12,
        format!("10^4 draws, max identity error {worst:.2e}; max |E[h2|x1]|, |E h1| = {cond_worst:.2e}"),
    )
}

fn criterion_6(notes: &mut Vec<String>) -> Outcome {
    let mut pass = true;
    for c in 2..=4usize {
        for k in [1, 5, 50, 500] {
            pass &= sigma1_sq(&IndependentSitesModel::uniform(c, k).unwrap()) == 0.0;
            let deg: Vec<Vec<f64>> = (0..k)
                .map(|s| (0..c).map(|j| (j == s % c) as u8 as f64).collect())
                .collect();
            pass &= sigma1_sq(&IndependentSitesModel::new(deg).unwrap()) == 0.0;
        }
    }
    let mut rng = replicate_rng(606, 0);
    let mut min_pos = f64::INFINITY;
    for _ in 0..1000 {
        let c = rng.random_range(2..=4usize);
        let k = rng.random_range(1..=30usize);
        let s = sigma1_sq(&random_independent(&mut rng, c, k));
        min_pos = min_pos.min(s);
    }
    pass &= min_pos > 0.0;
    let subset = IndependentSitesModel::new(vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap();
    notes.push(format!(
        "note 6: sigma1^2 also vanishes for sites uniform on a proper subset of categories (e.g. (1/2,1/2,0,0)): {}",
        sigma1_sq(&subset)
    ));
    outcome(pass, format!("exact zeros for uniform/degenerate; min over 1000 random models {min_pos:.3e}"))
}

fn criterion_7(notes: &mut Vec<String>) -> Outcome {
    let t = Instant::now();
    let mut exact_ok = true;
    let mut rng = replicate_rng(707, 0);
    for n in 5..=8usize {
        for _ in 0..5 {
            let k = rng.random_range(1..=12usize);
            let rows: Vec<Vec<u8>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(0..4u8)).collect()).collect();
            let pm = PairwiseMismatches::from_rows(&rows);
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let mut brute = [0u128; 3];
            for &(a, b) in &pairs {
                for &(c, d) in &pairs {
                    let shared = (c == a || c == b) as usize + (d == a || d == b) as usize;
                    brute[shared] += pm.get(a, b) as u128 * pm.get(c, d) as u128;
                }
            }
            exact_ok &= pm.overlap_sums() == brute;
        }
    }

    let model = IndependentSitesModel::identical(&[0.9, 0.1], 50).unwrap();
    let (n, reps) = (30usize, 2000u64);
    let exact = exact_var_t2(&model, n).unwrap();
    let est: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let mut rng = replicate_rng(7, r);
            let pm = PairwiseMismatches::from_rows(&sample_rows(&model, n, &mut rng));
            let j = jackknife_from_mismatches(&pm).unwrap();
            (j.value, j.oracle_value)
        })
        .collect();
    let z = |pick: fn(&(f64, f64)) -> f64| {
        let v: Vec<f64> = est.iter().map(pick).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m - exact) / (sd / (v.len() as f64).sqrt())
    };
    let (z_closed, z_oracle) = (z(|e| e.0), z(|e| e.1));

    // how the positive bias grows when the kernel is close to degenerate
    let near = IndependentSitesModel::identical(&[0.4, 0.3, 0.2, 0.1], 50).unwrap();
    let near_exact = exact_var_t2(&near, n).unwrap();
    let near_mean = (0..500u64)
        .map(|r| {
            let mut rng = replicate_rng(8, r);
            jackknife_from_mismatches(&PairwiseMismatches::from_rows(&sample_rows(&near, n, &mut rng)))
                .unwrap()
                .value
        })
        .sum::<f64>()
        / 500.0;
    notes.push(format!(
        "note 7: jackknife bias depends on E h2^2 / sigma1^2; for marginal (0.4,0.3,0.2,0.1) at n = 30 the mean estimate is {:.1}% above the exact variance",
        100.0 * (near_mean / near_exact - 1.0)
    ));
    let elapsed = t.elapsed();
    let pass = exact_ok && z_closed.abs() < 4.0 && z_oracle.abs() < 4.0 && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!("S_c exact for n = 5..8; n = 30, 2000 reps: z(closed form) = {z_closed:.2}, z(delete-one) = {z_oracle:.2}; {elapsed:.1?}"),
    )
}

fn skewed(k: usize) -> ModelSpec {
    ModelSpec::Independent {
        categories: 4,
        sites: k,
        marginals: vec![vec![0.7, 0.1, 0.1, 0.1]],
    }
}

fn sticky_chain() -> ModelSpec {
    let (pi, rho) = ([0.95, 0.05], 0.9);
    let p = (0..2)
        .map(|i| (0..2).map(|j| rho * (i == j) as u8 as f64 + (1.0 - rho) * pi[j]).collect())
        .collect();
    ModelSpec::Markov {
        categories: 2,
        sites: 50,
        pi0: pi.to_vec(),
        transition: p,
    }
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let r = clt_study(&SimConfig {
        model: skewed(50),
        n: 200,
        sites: None,
        replicates: 2000,
        seed: 1,
        statistic: Statistic::StandardizedT2,
    })
    .unwrap();
    let markov = rate_study(&RateConfig {
        model: sticky_chain(),
        n_grid: vec![],
        k_grid: vec![50, 200, 800],
        n: Some(50),
        replicates: 20_000,
        seed: 5,
    })
    .unwrap();
    let ks: Vec<f64> = markov.rows.iter().map(|r| r.ks_distance).collect();
    let elapsed = t.elapsed();
    let pass = r.ks_distance < 0.05 && ks[0] > ks[1] && ks[1] > ks[2] && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "independent n = 200, K = 50: KS = {:.4}; Markov n = 50, K = 50/200/800: KS = {:.4}/{:.4}/{:.4}; {elapsed:.1?}",
            r.ks_distance, ks[0], ks[1], ks[2]
        ),
    )
}

fn criterion_9() -> Outcome {
    let r = rate_study(&RateConfig {
        model: ModelSpec::Independent {
            categories: 2,
            sites: 1,
            marginals: vec![vec![0.9, 0.1]],
        },
        n_grid: vec![25, 100, 400],
        k_grid: vec![],
        n: None,
        replicates: 20_000,
        seed: 3,
    })
    .unwrap();
    let slope = r.log_log_slope.unwrap_or(f64::NAN);
    let b: Vec<f64> = r.rows.iter().map(|row| row.berry_esseen_bound.unwrap()).collect();
    let halves = b[1] == b[0] / 2.0 && b[2] == b[1] / 2.0;
    let kr = rate_study(&RateConfig {
        model: skewed(10),
        n_grid: vec![],
        k_grid: vec![4, 25, 100],
        n: Some(20),
        replicates: 200,
        seed: 9,
    })
    .unwrap();
    let rates_ok = kr
        .rows
        .iter()
        .all(|row| row.rate.and_then(|d| d.value()) == Some(1.0 / (row.k as f64).sqrt()));
    let ks: Vec<String> = r.rows.iter().map(|row| format!("{:.4}", row.ks_distance)).collect();
    outcome(
        (-0.8..=-0.3).contains(&slope) && halves && rates_ok,
        format!("KS over n = 25/100/400: {}, slope {slope:.3}; bound halves per 4x n: {halves}; K-rate column K^-1/2: {rates_ok}", ks.join("/")),
    )
}

fn criterion_10() -> Outcome {
    let t = Instant::now();
    let size = power_study(&PowerConfig {
        null: skewed(200),
        alternative: Alternative::Fixed { model: skewed(200) },
        n_grid: vec![100],
        alpha: 0.05,
        sided: Sidedness::Two,
        replicates: 2000,
        seed: 11,
    })
    .unwrap();
    let power = power_study(&PowerConfig {
        null: skewed(100),
        alternative: Alternative::Shifted { effect: 0.01 },
        n_grid: vec![20, 50, 100, 200],
        alpha: 0.05,
        sided: Sidedness::Right,
        replicates: 2000,
        seed: 12,
    })
    .unwrap();
    let rates: Vec<f64> = power.rows.iter().map(|r| r.rejection_rate).collect();
    let s = &size.rows[0];
    let elapsed = t.elapsed();
    let pass = (0.03..=0.08).contains(&s.rejection_rate)
        && s.mean_t_n.abs() <= 0.15
        && rates.windows(2).all(|w| w[0] < w[1])
        && rates[0] > 0.05
        && rates[3] > 0.8
        && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "size {:.4} (mean T_n {:.3}); power over n = 20/50/100/200: {:?}; {elapsed:.1?}",
            s.rejection_rate, s.mean_t_n, rates
        ),
    )
}

fn run_cli(args: &[&str], extra_env: Option<(&str, &str)>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_neutrality-kit"));
    cmd.args(args).current_dir(env!("CARGO_MANIFEST_DIR")).env_remove("NEUTRALITY_KIT_SEED");
    if let Some((k, v)) = extra_env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn criterion_11() -> Outcome {
    let analyze = ["analyze", "data/example.fasta", "--bootstrap-B", "300", "--seed", "17"];
    let runs: Vec<Vec<u8>> = ["1", "1", "4"]
        .iter()
        .map(|t| {
            let mut args = analyze.to_vec();
            args.extend(["--threads", t]);
            run_cli(&args, None)
        })
        .collect();
    let env_seed = run_cli(&["analyze", "data/example.fasta", "--bootstrap-B", "300"], Some(("NEUTRALITY_KIT_SEED", "17")));
    let sims: Vec<Vec<u8>> = ["1", "1", "4"]
        .iter()
        .map(|t| run_cli(&["simulate", "configs/clt.json", "--threads", t], None))
        .collect();
    let power: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .map(|t| run_cli(&["simulate", "configs/drift.json", "--threads", t, "--format", "tsv"], None))
        .collect();
    let pass = runs[0] == runs[1]
        && runs[1] == runs[2]
        && env_seed == runs[0]
        && sims[0] == sims[1]
        && sims[1] == sims[2]
        && power[0] == power[1];
    outcome(pass, "analyze (bootstrap on) and simulate byte-identical across runs, --threads 1/3/4 and the seed env var")
}

fn main() -> ExitCode {
    let mut notes = Vec::new();
    let criteria: Vec<(&str, Check)> = vec![
        ("worked example", Box::new(|_| criterion_1())),
        ("frequency-shift diagnostics", Box::new(|_| criterion_2())),
        ("p-value arithmetic", Box::new(|_| criterion_3())),
        ("closed forms vs enumeration", Box::new(criterion_4)),
        ("decomposition identity", Box::new(|_| criterion_5())),
        ("degeneracy", Box::new(criterion_6)),
        ("jackknife", Box::new(criterion_7)),
        ("CLT study", Box::new(|_| criterion_8())),
        ("rate study", Box::new(|_| criterion_9())),
        ("size and power", Box::new(|_| criterion_10())),
        ("determinism", Box::new(|_| criterion_11())),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let o = check(&mut notes);
        failed += !o.pass as usize;
        println!("criterion {:>2} {}: {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    for n in &notes {
        println!("{n}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("all 11 criteria passed");
        ExitCode::SUCCESS
    }
}
