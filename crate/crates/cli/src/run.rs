//! Command execution. Artifacts are collected in memory and written once at the end.

use crate::config::{ExperimentConfig, IndicatorTag, Marking, RhoTag};
use apxlab_core::adaptive::{
    budget_curve, fit_rate, uniform_curve, BudgetCurve, DistanceFunction, EpsSchedule, GreedyLimits, Indicator,
    RateReport,
};
use apxlab_core::catalog::lookup;
use apxlab_core::checks::structural_suite;
use apxlab_core::elliptic::{afem_loop, problem, AfemSettings};
use apxlab_core::fe::{default_order, default_p0, NormKind};
use apxlab_core::mesh::{admissibility_report, by_name, mesh_load, to_text, CompletionLedger, Partition};
use apxlab_core::report::emit_plot_data;
use apxlab_core::ApxError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Files produced by a run, in write order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl Artifacts {
    fn add(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(ApxError),
    Cap(ApxError),
    /// Checks ran but some failed.
    Checks(Vec<String>),
}

impl From<ApxError> for Failure {
    fn from(e: ApxError) -> Self {
        match e {
            ApxError::IterationCap { .. } => Failure::Cap(e),
            e => Failure::Numerical(e),
        }
    }
}

/// Outcome: artifacts to write even on failure, and the failure if any.
pub type Outcome = (Artifacts, Option<Failure>);

pub fn initial_partition(cfg: &ExperimentConfig) -> Result<Partition, Failure> {
    let p = match by_name(&cfg.domain, cfg.rule) {
        Some(f) => Partition::initial(f),
        None => mesh_load(&cfg.domain).map_err(|e| Failure::Config(format!("domain `{}`: {e}", cfg.domain)))?,
    };
    Ok(p.uniform(cfg.initial_refinements))
}

fn corner_marks(p: &Partition) -> Vec<u32> {
    let d = p.forest().read();
    p.active()
        .iter()
        .copied()
        .filter(|&e| d.coords(e).iter().any(|v| v[0] == 0.0 && v[1] == 0.0))
        .collect()
}

pub fn mesh(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let p0 = initial_partition(cfg)?;
    let mut art = Artifacts::default();
    let mut p = p0.clone();
    let mut ledger = CompletionLedger::new(p0.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sizes = String::from("round,N,marked,hanging\n");
    sizes.push_str(&format!("0,{},0,{}\n", p.len(), p.hanging_count()));
    for r in 0..cfg.rounds {
        let marked: Vec<u32> = match cfg.marking {
            Marking::Uniform => p.active().to_vec(),
            Marking::Corner => corner_marks(&p),
            Marking::Random => p.active().iter().copied().filter(|_| rng.gen_bool(0.2)).collect(),
        };
        let (next, step) = p.refine_counted(&marked)?;
        ledger.record(step);
        p = next;
        if p.len() > cfg.max_cells {
            art.notes.push(format!("stopped after round {} at the cell limit", r + 1));
            sizes.push_str(&format!("{},{},{},{}\n", r + 1, p.len(), step.marked, p.hanging_count()));
            break;
        }
        sizes.push_str(&format!("{},{},{},{}\n", r + 1, p.len(), step.marked, p.hanging_count()));
    }
    let rep = admissibility_report(&p, cfg.m);
    art.add("mesh.txt", to_text(&p));
    art.add("rounds.csv", sizes);
    art.add(
        "admissibility.csv",
        format!(
            "finite_support_c,gradedness_ratio,local_finiteness,completion_ratio,conforming\n{},{:.12e},{},{:.12e},{}\n",
            rep.finite_support_c,
            rep.gradedness_ratio,
            rep.local_finiteness,
            ledger.ratio(),
            p.conformity_audit()
        ),
    );
    Ok((art, None))
}

fn distance(cfg: &ExperimentConfig) -> DistanceFunction {
    match cfg.rho {
        RhoTag::H1 => DistanceFunction::Energy,
        RhoTag::Lp => DistanceFunction::Lp(cfg.p),
        RhoTag::WeightedLp => DistanceFunction::WeightedLp {
            p: cfg.p,
            theta: cfg.theta,
        },
        RhoTag::TotalError => DistanceFunction::TotalError {
            problem: Arc::new(problem(&cfg.problem).expect("validated name")),
            d: cfg.d,
        },
    }
}

fn indicator(cfg: &ExperimentConfig) -> Indicator {
    match cfg.indicator {
        IndicatorTag::InterpError => {
            let (norm, broken, theta) = match cfg.rho {
                RhoTag::H1 | RhoTag::TotalError => (NormKind::H1Semi, false, 0.0),
                RhoTag::Lp => (NormKind::Lp(cfg.p), false, 0.0),
                RhoTag::WeightedLp => (NormKind::Lp(cfg.p), true, cfg.theta),
            };
            Indicator::InterpError {
                norm,
                m: cfg.m,
                theta,
                broken,
            }
        }
        IndicatorTag::LocalSeminorm => {
            let (x_p, x_q) = match cfg.rho {
                RhoTag::H1 => (2.0, 2.0),
                _ => (cfg.q, cfg.q),
            };
            Indicator::LocalSeminorm {
                alpha: cfg.alpha,
                x_p,
                x_q,
                delta: cfg.delta(),
                p: if cfg.rho == RhoTag::H1 { 2.0 } else { cfg.p },
                m: cfg.m,
            }
        }
    }
}

fn tail_fit(c: &BudgetCurve, k: usize) -> Result<RateReport, ApxError> {
    let env = c.envelope();
    let lo = env.get(env.len().saturating_sub(k)).map(|x| x.0).unwrap_or(0);
    fit_rate(c, Some((lo, usize::MAX)))
}

fn add_curve(art: &mut Artifacts, tag: &str, c: &BudgetCurve, k: usize) {
    art.add(&format!("{tag}_curve.csv"), c.to_csv());
    match tail_fit(c, k) {
        Ok(r) => {
            art.add(&format!("{tag}_rate.csv"), r.to_csv());
            art.add(&format!("{tag}_plot.csv"), emit_plot_data(c, &r));
            art.notes.push(format!("{tag}: s = {:.4} over N in [{}, {}]", r.s, r.n_lo, r.n_hi));
        }
        Err(e) => art.notes.push(format!("{tag}: no rate ({e})")),
    }
}

pub fn rates(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let p0 = initial_partition(cfg)?;
    let rho = distance(cfg);
    let u = match &rho {
        DistanceFunction::TotalError { problem, .. } => problem
            .exact
            .clone()
            .ok_or_else(|| Failure::Config(format!("problem `{}` has no exact solution", problem.name)))?,
        _ => lookup(&cfg.field, &p0, cfg.seed).expect("validated name").field,
    };
    let ind = indicator(cfg);
    let mut art = Artifacts::default();
    art.notes.push(format!("quadrature order = {}", default_order(cfg.m)));
    if matches!(cfg.rho, RhoTag::Lp | RhoTag::WeightedLp) && cfg.p != 2.0 {
        art.notes.push(format!("local exponent p0 = {}", default_p0(cfg.p)));
    }
    let schedule = EpsSchedule {
        start: cfg.eps_start,
        factor: cfg.eps_factor,
        steps: cfg.eps_steps,
    };
    let limits = GreedyLimits {
        cap: cfg.greedy_cap,
        max_cells: cfg.max_cells,
    };
    let greedy = budget_curve(&u, &rho, &ind, cfg.m, schedule, &p0, limits)?;
    if greedy.truncated {
        art.notes.push("greedy schedule stopped at the cell limit".into());
    }
    add_curve(&mut art, "greedy", &greedy, cfg.fit_points);
    let per_level = cfg.rule.children();
    let levels: Vec<usize> = (0..=cfg.uniform_levels)
        .take_while(|&l| p0.len() * per_level.pow(l as u32) <= cfg.max_cells)
        .collect();
    let uni = uniform_curve(&u, &rho, cfg.m, &p0, levels)?;
    add_curve(&mut art, "uniform", &uni, cfg.fit_points.min(4));
    Ok((art, None))
}

pub fn afem(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let prob = problem(&cfg.problem).expect("validated name");
    let p0 = match by_name(&cfg.domain, cfg.rule) {
        Some(_) if cfg.domain != prob.domain => {
            return Err(Failure::Config(format!(
                "problem `{}` is posed on `{}`, not `{}`",
                prob.name, prob.domain, cfg.domain
            )))
        }
        _ => initial_partition(cfg)?,
    };
    let settings = AfemSettings {
        m: cfg.m,
        d: cfg.d,
        theta: cfg.theta,
        max_iter: cfg.max_iter,
        max_cells: cfg.max_cells,
    };
    let run = afem_loop(&prob, &p0, &settings);
    let mut art = Artifacts::default();
    art.add("afem_trace.csv", run.trace.to_csv());
    art.add("final_mesh.txt", to_text(&run.trace.final_partition));
    if let Some(r) = run.trace.rows.last() {
        art.notes.push(format!("{} solves, final N = {}, eta = {:.4e}", run.trace.rows.len(), r.n, r.eta));
    }
    Ok((art, run.failure.map(Failure::from)))
}

pub fn check(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let results = structural_suite(cfg.seed)?;
    let mut art = Artifacts::default();
    let mut csv = String::from("check,passed,detail\n");
    let mut failed = vec![];
    for c in &results {
        csv.push_str(&format!("{},{},\"{}\"\n", c.name, c.passed, c.detail));
        if !c.passed {
            failed.push(format!("{}: {}", c.name, c.detail));
        }
    }
    art.add("checks.csv", csv);
    let failure = if failed.is_empty() { None } else { Some(Failure::Checks(failed)) };
    Ok((art, failure))
}
