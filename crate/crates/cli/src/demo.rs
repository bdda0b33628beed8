//! Printed walkthrough of the five-sequence, 16-site worked example.

use std::io::Write;

use neutrality_core::alignment::{classify_sites, pair_diff_count};
use neutrality_core::estimators::{summarize, total_pair_differences, t2, T2Normalization};
use neutrality_core::fixtures::worked_example;
use neutrality_core::{Result, ThetaSquaredPlugin};

pub fn run(out: &mut impl Write) -> std::io::Result<()> {
    let report = build().expect("fixture statistics are defined");
    out.write_all(report.as_bytes())
}

fn build() -> Result<String> {
    let a = worked_example();
    let cls = classify_sites(&a);
    let mut s = String::new();
    s.push_str("Polymorphic sites in a sample of five genes\n\n");
    s.push_str(&a.to_string());

    let counts: String = (0..a.sites())
        .map(|k| format!("({})", pair_diff_count(&a.column_counts(k))))
        .collect();
    s.push_str(&format!("\npairwise differences per site: {counts}\n"));
    let singletons: Vec<String> = cls
        .singleton_sites()
        .iter()
        .map(|&k| a.original_columns()[k].to_string())
        .collect();
    s.push_str(&format!("singleton sites: {}\n\n", singletons.join(", ")));

    let n = a.n();
    let sum = summarize(&a, ThetaSquaredPlugin::Unbiased)?;
    let total = total_pair_differences(&a);
    s.push_str(&format!("n = {n}, K = {}\n", a.sites()));
    s.push_str(&format!("S = {}\n", sum.s));
    s.push_str(&format!("S* = {}\n", sum.s_star));
    s.push_str(&format!("a_n = {:.4}, b_n = {:.4}\n", sum.a_n, sum.b_n));
    s.push_str(&format!("T1 = S / a_n = {:.4}\n", sum.t1));
    s.push_str(&format!("total pairwise differences = {total}\n"));
    for mode in [
        T2Normalization::PerSegregatingSite,
        T2Normalization::PerPair,
        T2Normalization::PerSitePerPair,
    ] {
        let v = t2(&a, mode)?.value;
        let label = match mode {
            T2Normalization::PerSegregatingSite => "PerSegregatingSite",
            T2Normalization::PerPair => "PerPair",
            T2Normalization::PerSitePerPair => "PerSitePerPair",
        };
        s.push_str(&format!("T2 [{label}] = {v:.2} ({v})\n"));
    }
    s.push_str(&format!("T3 = {:.4}\n", sum.t3));
    s.push_str(&format!("D1 = T2 [PerPair] - T1 = {:.2} ({})\n", sum.d1, sum.d1));
    s.push_str(&format!("Var(D1) = {:.4}\n", sum.var_d1));
    if let Some(d) = sum.d {
        s.push_str(&format!("D = {d:.4}\n"));
    }
    Ok(s)
}
