//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use geee::cli::{fit_summary, read_long_csv, Formula};
use geee::inference::sandwich_independence;
use geee::selection::select_structure;
use geee::simulation::{run_study, PanelDesign, QicFrequencyTable, SimulationScenario};
use geee::{fit_geee, fit_independence, AsymmetrySequence, CorrelationKind, FitControl};

const SEED: u64 = 2021;

fn report(n: u32, started: Instant, budget: Duration, failures: Vec<String>, detail: String) {
    let elapsed = started.elapsed();
    let mut failures = failures;
    if elapsed > budget {
        failures.push(format!("took {elapsed:.1?}, budget {budget:?}"));
    }
    if failures.is_empty() {
        println!("criterion {n}: PASS ({detail}; {elapsed:.2?})");
    } else {
        println!("criterion {n}: FAIL ({}; {detail}; {elapsed:.2?})", failures.join("; "));
        panic!("criterion {n} failed: {}", failures.join("; "));
    }
}

fn labor_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/labor.csv")
}

fn labor_formula() -> Formula {
    Formula::new(
        "pain",
        &["treatment".into(), "time".into(), "treatment:time".into()],
        true,
    )
    .unwrap()
}

fn labor_levels() -> AsymmetrySequence {
    AsymmetrySequence::from_values(&[0.25, 0.5, 0.75]).unwrap()
}

#[test]
fn criterion_1_labor_independence_row() {
    let started = Instant::now();
    let file = match std::fs::File::open(labor_path()) {
        Ok(f) => f,
        Err(e) => {
            return report(1, started, Duration::from_secs(1), vec![format!("fixture {} unavailable: {e}", labor_path().display())], String::new());
        }
    };
    let data = read_long_csv(file, &labor_formula(), Some(30.0)).expect("labor data parses");
    let (_, summary) = fit_summary(&data, &labor_formula(), &labor_levels(), CorrelationKind::Independence, 0.95)
        .expect("independence fit");
    let est = [2.63, 4.34, 10.70, -9.65];
    let se = [4.83, 5.37, 1.97, 2.12];
    let rows: Vec<_> = summary.coefficients.iter().filter(|c| c.tau == 0.25).collect();
    let mut failures = Vec::new();
    for (j, row) in rows.iter().enumerate() {
        if (row.estimate - est[j]).abs() > 0.02 {
            failures.push(format!("{} estimate {:.4} vs {}", row.term, row.estimate, est[j]));
        }
        if (row.se - se[j]).abs() > 0.05 {
            failures.push(format!("{} se {:.4} vs {}", row.term, row.se, se[j]));
        }
    }
    let detail = rows
        .iter()
        .map(|r| format!("{:.2}({:.2})", r.estimate, r.se))
        .collect::<Vec<_>>()
        .join(" ");
    report(1, started, Duration::from_secs(1), failures, detail);
}

#[test]
fn criterion_2_labor_qic_ordering() {
    let started = Instant::now();
    let file = match std::fs::File::open(labor_path()) {
        Ok(f) => f,
        Err(e) => {
            return report(2, started, Duration::from_secs(5), vec![format!("fixture {} unavailable: {e}", labor_path().display())], String::new());
        }
    };
    let data = read_long_csv(file, &labor_formula(), Some(30.0)).expect("labor data parses");
    let qic = select_structure(&data, &labor_levels(), &CorrelationKind::ALL, &FitControl::default());
    let target = [
        (CorrelationKind::Unstructured, 2416.515),
        (CorrelationKind::Ar1, 2416.924),
        (CorrelationKind::Exchangeable, 2418.182),
        (CorrelationKind::Independence, 2419.414),
    ];
    let mut failures = Vec::new();
    let mut values = Vec::new();
    for (kind, value) in target {
        match qic.entry(kind) {
            Some(e) => {
                values.push(e.qic);
                if (e.qic - value).abs() > 1.0 {
                    failures.push(format!("{} QIC {:.3} vs {value}", kind.short_name(), e.qic));
                }
            }
            None => {
                values.push(f64::NAN);
                failures.push(format!("{} fit failed", kind.short_name()));
            }
        }
    }
    if !values.windows(2).all(|w| w[0] < w[1]) {
        failures.push("ordering Un < AR1 < Exc < Ind violated".into());
    }
    let detail = format!("Un/AR1/Exc/Ind = {values:.3?}");
    report(2, started, Duration::from_secs(5), failures, detail);
}

#[test]
fn criteria_3_and_4_desk_scale_simulation() {
    let started = Instant::now();
    let scenario = SimulationScenario::baseline(0.5, 100, 100, SEED);
    let result = run_study(&scenario).expect("study runs");
    let elapsed = started.elapsed();

    let mut f3 = Vec::new();
    for c in &result.cells {
        if c.bias.abs() >= 0.01 {
            f3.push(format!("|bias| {:.4} for {} at tau {}", c.bias.abs(), c.structure.short_name(), c.tau));
        }
    }
    let eff = |k| result.cell(0.75, k).and_then(|c| c.eff).unwrap();
    let (un, ar1) = (eff(CorrelationKind::Unstructured), eff(CorrelationKind::Ar1));
    if !(un > ar1) {
        f3.push(format!("EFF(Un) {un:.3} not above EFF(AR1) {ar1:.3} at tau 0.75"));
    }
    if !(ar1 >= 1.0) {
        f3.push(format!("EFF(AR1) {ar1:.3} below 1"));
    }
    let max_bias = result.cells.iter().map(|c| c.bias.abs()).fold(0.0, f64::max);
    let detail3 = format!(
        "max |bias| {max_bias:.4}, EFF(Un) {un:.3}, EFF(AR1) {ar1:.3}, {} of 100 replications used",
        result.replications_used
    );

    let mut f4 = Vec::new();
    let mut ratios = Vec::new();
    for t in [0.25, 0.5, 0.75] {
        let c = result.cell(t, CorrelationKind::Independence).unwrap();
        let sd = c.sd.unwrap();
        let ratio = (sd - c.se).abs() / sd;
        ratios.push(ratio);
        if ratio >= 0.25 {
            f4.push(format!("|SD-SE|/SD {ratio:.3} at tau {t}"));
        }
    }
    let detail4 = format!("|SD-SE|/SD = {ratios:.3?}");

    // criterion 4 shares the run, so it is reported first and both are
    // evaluated before either can abort the test
    let ok4 = f4.is_empty();
    let line4 = if ok4 {
        format!("criterion 4: PASS ({detail4}; shares run)")
    } else {
        format!("criterion 4: FAIL ({}; {detail4})", f4.join("; "))
    };
    println!("{line4}");
    if elapsed > Duration::from_secs(120) {
        f3.push(format!("took {elapsed:.1?}, budget 120s"));
    }
    let ok3 = f3.is_empty();
    if ok3 {
        println!("criterion 3: PASS ({detail3}; {elapsed:.2?})");
    } else {
        println!("criterion 3: FAIL ({}; {detail3}; {elapsed:.2?})", f3.join("; "));
    }
    assert!(ok3 && ok4, "criterion 3: {f3:?}; criterion 4: {f4:?}");
}

#[test]
fn criterion_5_qic_frequency() {
    let started = Instant::now();
    let results: Vec<_> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&rho| {
            let mut s = SimulationScenario::baseline(rho, 50, 100, SEED);
            s.design = PanelDesign::STANDARD_UNBALANCED;
            run_study(&s).expect("study runs")
        })
        .collect();
    let table = QicFrequencyTable::from_results(&results);
    let count = |k| table.pooled.get(&k).copied().unwrap_or(0);
    let mut failures = Vec::new();
    if table.plurality() != Some(CorrelationKind::Ar1) {
        failures.push(format!("plurality is {:?}", table.plurality()));
    }
    if count(CorrelationKind::Ar1) < 120 {
        failures.push(format!("AR1 selected {} times, fewer than 120", count(CorrelationKind::Ar1)));
    }
    let detail = format!(
        "Ind/Exc/AR1/Un = {}/{}/{}/{}",
        count(CorrelationKind::Independence),
        count(CorrelationKind::Exchangeable),
        count(CorrelationKind::Ar1),
        count(CorrelationKind::Unstructured)
    );
    report(5, started, Duration::from_secs(300), failures, detail);
}

#[test]
fn criterion_6_oracle_equivalences() {
    let started = Instant::now();
    let control = FitControl::default();
    let mut failures = Vec::new();
    let mut worst = [0.0f64; 4];
    let mut r = rng(SEED);
    for k in 0..5 {
        let d = random_dataset(&mut r, 40, 1 + k % 4, (1, 6), 0.4);
        let fit = fit_independence(&d, tau(0.5), &control).unwrap();
        worst[0] = worst[0].max(max_rel_diff(&fit.blocks[0].beta, &ols(&d)));

        let balanced = random_dataset(&mut r, 60, 3, (4, 4), 0.5);
        for kind in [CorrelationKind::Exchangeable, CorrelationKind::Ar1] {
            let fit = fit_geee(&balanced, tau(0.5), kind, &control).unwrap();
            let (beta, _) = classical_gee(&balanced, kind);
            worst[1] = worst[1].max(max_rel_diff(&fit.blocks[0].beta, &beta));
        }

        for t in [0.2, 0.75] {
            let fit = fit_independence(&d, tau(t), &control).unwrap();
            worst[2] = worst[2].max(max_rel_diff(&fit.blocks[0].beta, &expectile_objective_minimiser(&d, t)));
        }

        let singles = random_dataset(&mut r, 60, 3, (1, 1), 0.0);
        let fit = fit_independence(&singles, tau(0.5), &control).unwrap();
        let cov = sandwich_independence(&fit, &singles).unwrap();
        let white = hc0(&singles);
        worst[3] = worst[3].max(max_abs_diff(&cov.vcov, &white) / white.amax());
    }
    for (name, (w, tol)) in ["OLS", "classical GEE", "objective minimiser", "HC0"]
        .iter()
        .zip(worst.iter().zip([1e-10, 1e-6, 1e-6, 1e-8]))
    {
        if *w >= tol {
            failures.push(format!("{name} discrepancy {w:e} above {tol:e}"));
        }
    }
    let detail = format!("worst discrepancies {}", worst.iter().map(|w| format!("{w:.1e}")).collect::<Vec<_>>().join(", "));
    report(6, started, Duration::from_secs(30), failures, detail);
}

#[test]
fn criterion_7_invariant_suites() {
    let started = Instant::now();
    let mut failures = Vec::new();
    for k in 0..200 {
        let case = InvariantCase::nth(k);
        if let Err(e) = check_invariants(case) {
            failures.push(format!("{case:?}: {e}"));
        }
    }
    let detail = "200 random panels, n in [5, 50], p in [1, 5]".to_string();
    report(7, started, Duration::from_secs(60), failures, detail);
}
