//! The five subcommands. Every command writes its outputs atomically into
//! the chosen directory and echoes the effective config into its JSON report.

use anyhow::{anyhow, Result};
use rayon::prelude::*;
use serde::Serialize;

use crn_queues::conservation::{self, RegionVertices};
use crn_queues::ctmc::JointPmf;
use crn_queues::model::NetworkModel;
use crn_queues::optimize;
use crn_queues::sim::{
    replicate, replication_seed, run_coupled, run_coupled_logged, run_decoupled,
    run_decoupled_logged, EventLog, SimConfig, SimEstimate, Topology,
};
use crn_queues::synthesis::{self, AlphaForTarget, FeasibleInterval, Thresholds};
use crn_queues::{mmn, Error};

use crate::config::{RunConfig, SweepConfig};
use crate::output::{cell, marginal_csv, report_path, OutDir};

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Closed-form delays: the primary's M/M/N value and the secondary's value
/// recovered from the conserved sum. Absent for classes without traffic.
#[derive(Debug, Clone, Copy, Serialize)]
struct LawDelays {
    d_pu: Option<f64>,
    d_su: Option<f64>,
    conservation_sum: f64,
}

fn law_delays(model: &NetworkModel<f64>) -> crn_queues::Result<LawDelays> {
    let d_pu = if model.pu.lambda > 0.0 {
        Some(mmn::total_delay(&model.pu, model.n_servers)?)
    } else {
        None
    };
    let d_su = if model.su.lambda > 0.0 {
        Some(conservation::secondary_delay_from_law(model)?)
    } else {
        None
    };
    Ok(LawDelays {
        d_pu,
        d_su,
        conservation_sum: conservation::conservation_sum(model)?,
    })
}

#[derive(Debug, Serialize)]
struct AnalyzeReport<'a> {
    config: &'a RunConfig,
    effective_model: NetworkModel<f64>,
    truncation: crn_queues::TruncationSpec64,
    achieved_tail_mass: f64,
    global_balance_residual: f64,
    delays: AnalyzeDelays,
    conservation: ConservationBlock,
}

#[derive(Debug, Serialize)]
struct AnalyzeDelays {
    d_pu_ctmc: Option<f64>,
    d_su_ctmc: Option<f64>,
    d_pu_mmn: Option<f64>,
    d_su_law: Option<f64>,
    rel_err_d_pu_ctmc_vs_mmn: Option<f64>,
    rel_err_d_su_ctmc_vs_law: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ConservationBlock {
    law: f64,
    ctmc: f64,
    relative_error: f64,
}

pub fn analyze(config: &RunConfig, out: &OutDir) -> Result<()> {
    let model = config.effective_model()?;
    let pmf: JointPmf<f64> = config.solve_pmf(&model)?;
    let (pu_marginal, su_marginal) = pmf.marginals();
    let chain = pmf.delays();
    let law = law_delays(&model)?;

    let u = model.utilization();
    let ctmc_sum = u.pu * chain.pu.unwrap_or(0.0) + u.su * chain.su.unwrap_or(0.0);
    let report = AnalyzeReport {
        config,
        effective_model: model,
        truncation: *pmf.truncation(),
        achieved_tail_mass: pmf.achieved_tail_mass(),
        global_balance_residual: crn_queues::ctmc::global_balance_residual(&pmf),
        delays: AnalyzeDelays {
            d_pu_ctmc: chain.pu,
            d_su_ctmc: chain.su,
            d_pu_mmn: law.d_pu,
            d_su_law: law.d_su,
            rel_err_d_pu_ctmc_vs_mmn: chain
                .pu
                .zip(law.d_pu)
                .map(|(a, b)| relative_error(a, b)),
            rel_err_d_su_ctmc_vs_law: chain
                .su
                .zip(law.d_su)
                .map(|(a, b)| relative_error(a, b)),
        },
        conservation: ConservationBlock {
            law: law.conservation_sum,
            ctmc: ctmc_sum,
            relative_error: relative_error(ctmc_sum, law.conservation_sum),
        },
    };

    let mut joint_csv = Vec::new();
    pmf.write_csv(&mut joint_csv)?;
    report_path(&out.write("joint_pmf.csv", &joint_csv)?);
    report_path(&out.write_json("joint_pmf.json", &pmf)?);
    report_path(&out.write("pu_marginal.csv", marginal_csv("i", &pu_marginal).as_bytes())?);
    report_path(&out.write("su_marginal.csv", marginal_csv("j", &su_marginal).as_bytes())?);
    report_path(&out.write_json("report.json", &report)?);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    rho_pu: f64,
    d_pu_law: Option<f64>,
    d_su_law: Option<f64>,
    d_pu_ctmc: Option<f64>,
    d_su_ctmc: Option<f64>,
    d_pu_sim: Option<f64>,
    d_su_sim: Option<f64>,
    ci_d_pu: Option<f64>,
    ci_d_su: Option<f64>,
    status: String,
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    config: &'a RunConfig,
    simulated: bool,
    rows: Vec<SweepRow>,
}

fn sweep_point(
    config: &RunConfig,
    sweep: &SweepConfig,
    index: usize,
    simulate: bool,
) -> (SweepRow, Option<Error>) {
    let rho_pu = if sweep.points == 1 {
        sweep.rho_pu_start
    } else {
        sweep.rho_pu_start
            + (sweep.rho_pu_end - sweep.rho_pu_start) * index as f64 / (sweep.points - 1) as f64
    };
    let mut row = SweepRow {
        rho_pu,
        d_pu_law: None,
        d_su_law: None,
        d_pu_ctmc: None,
        d_su_ctmc: None,
        d_pu_sim: None,
        d_su_sim: None,
        ci_d_pu: None,
        ci_d_su: None,
        status: "ok".into(),
    };
    let mut point_config = config.clone();
    point_config.model.pu.lambda = rho_pu * point_config.model.pu.mu;
    let run = || -> crn_queues::Result<(SweepRow, Option<Error>)> {
        let mut row = row.clone();
        let model = match point_config.effective_model() {
            Ok(m) => m,
            Err(e) => {
                row.status = format!("error: {e}");
                return Ok((row, Some(e)));
            }
        };
        let law = law_delays(&model)?;
        row.d_pu_law = law.d_pu;
        row.d_su_law = law.d_su;
        let chain = point_config.solve_pmf(&model)?.delays();
        row.d_pu_ctmc = chain.pu;
        row.d_su_ctmc = chain.su;
        if simulate {
            let sim_cfg = point_config.simulation.unwrap_or_default().resolve();
            let estimate = replicate(&sim_cfg, |c| run_decoupled(&model, c))?;
            row.d_pu_sim = estimate.d_pu;
            row.d_su_sim = estimate.d_su;
            if let Some(ci) = estimate.ci {
                row.ci_d_pu = ci.d_pu;
                row.ci_d_su = ci.d_su;
            }
        }
        Ok((row, None))
    };
    match run() {
        Ok(outcome) => outcome,
        Err(e) => {
            row.status = format!("error: {e}");
            (row, Some(e))
        }
    }
}

pub fn sweep(config: &RunConfig, out: &OutDir, no_sim: bool) -> Result<()> {
    let sweep_cfg = config
        .sweep
        .ok_or_else(|| anyhow!("the sweep command needs a `sweep` block in the config"))?;
    if sweep_cfg.points == 0 {
        return Err(anyhow!("sweep needs at least one point"));
    }
    let simulate = !no_sim;
    let outcomes: Vec<(SweepRow, Option<Error>)> = (0..sweep_cfg.points)
        .into_par_iter()
        .map(|k| sweep_point(config, &sweep_cfg, k, simulate))
        .collect();

    let mut csv = format!(
        "{}\nrho_pu,d_pu_law,d_su_law,d_pu_ctmc,d_su_ctmc,d_pu_sim,d_su_sim,ci_d_pu,ci_d_su,status\n",
        crn_queues::CSV_VERSION_HEADER
    );
    for (row, _) in &outcomes {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.rho_pu,
            cell(row.d_pu_law),
            cell(row.d_su_law),
            cell(row.d_pu_ctmc),
            cell(row.d_su_ctmc),
            cell(row.d_pu_sim),
            cell(row.d_su_sim),
            cell(row.ci_d_pu),
            cell(row.ci_d_su),
            row.status
        ));
    }
    report_path(&out.write("sweep.csv", csv.as_bytes())?);
    let rows: Vec<SweepRow> = outcomes.iter().map(|(row, _)| row.clone()).collect();
    report_path(&out.write_json(
        "sweep.json",
        &SweepReport {
            config,
            simulated: simulate,
            rows,
        },
    )?);

    if let Some(first_error) = outcomes.into_iter().find_map(|(_, e)| e) {
        return Err(anyhow!(first_error).context("one or more sweep points failed"));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct VertexBlock {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl From<&RegionVertices<f64>> for VertexBlock {
    fn from(v: &RegionVertices<f64>) -> Self {
        Self {
            a: v.a,
            b: v.b,
            c: v.c,
            d: v.d,
        }
    }
}

#[derive(Debug, Serialize)]
struct SynthesizeReport<'a> {
    config: &'a RunConfig,
    effective_model: NetworkModel<f64>,
    vertices: VertexBlock,
    interval: FeasibleInterval<f64>,
    feasible: bool,
    frontier: Option<synthesis::FrontierPoint<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frontier_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_for_target: Option<AlphaForTarget<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    suggestion: Option<String>,
}

fn require_thresholds(config: &RunConfig) -> Result<Thresholds<f64>> {
    config
        .thresholds
        .ok_or_else(|| anyhow!("this command needs a `thresholds` block in the config"))
}

pub fn synthesize(config: &RunConfig, out: &OutDir) -> Result<()> {
    let model = config.effective_model()?;
    let thresholds = require_thresholds(config)?;
    let vertices = conservation::region_vertices(&model)?;
    let interval = synthesis::feasible_interval(&vertices, &thresholds);
    let (frontier, frontier_error) = match synthesis::frontier_point(&vertices, &thresholds) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    // The one way out of an infeasible secondary target is a looser primary
    // threshold.
    let infeasible_su_target = frontier
        .as_ref()
        .is_some_and(|f| f.excess_delay_pu.is_none())
        || (!interval.feasible && interval.a1 >= 1.0);
    let suggestion = infeasible_su_target.then(|| "relax th_pu".to_string());
    let alpha_for_target = match config.target {
        Some(t) => Some(synthesis::unique_alpha_for_target(
            &vertices,
            (t.w_pu, t.w_su),
        )?),
        None => None,
    };

    let polyline = synthesis::region_polyline(&vertices, &thresholds);
    let mut csv = format!("{}\nlabel,w_pu,w_su\n", crn_queues::CSV_VERSION_HEADER);
    for point in &polyline {
        csv.push_str(&format!("{},{},{}\n", point.label, point.w_pu, point.w_su));
    }
    report_path(&out.write("region.csv", csv.as_bytes())?);

    let report = SynthesizeReport {
        config,
        effective_model: model,
        vertices: VertexBlock::from(&vertices),
        feasible: interval.feasible,
        interval,
        frontier,
        frontier_error,
        alpha_for_target,
        suggestion,
    };
    report_path(&out.write_json("synthesis.json", &report)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct OptimizeReport<'a> {
    config: &'a RunConfig,
    effective_model: NetworkModel<f64>,
    vertices: VertexBlock,
    interval: FeasibleInterval<f64>,
    feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    explanation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficients: Option<optimize::CostCoefficients<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimum: Option<optimize::OptimalMix<f64>>,
}

pub fn optimize_cmd(config: &RunConfig, out: &OutDir) -> Result<()> {
    let model = config.effective_model()?;
    let thresholds = require_thresholds(config)?;
    let vertices = conservation::region_vertices(&model)?;
    let interval = synthesis::feasible_interval(&vertices, &thresholds);

    if !interval.feasible {
        let report = OptimizeReport {
            config,
            effective_model: model,
            vertices: VertexBlock::from(&vertices),
            interval,
            feasible: false,
            explanation: Some(
                "thresholds admit no mixing parameter; relax them and re-run".into(),
            ),
            coefficients: None,
            optimum: None,
        };
        report_path(&out.write_json("optimize.json", &report)?);
        return Ok(());
    }

    let optimum = optimize::optimal_alpha(&vertices, &interval)?;
    let curve = optimize::cost_curve(&vertices, &interval, 512)?;
    let mut csv = format!("{}\nalpha,cost\n", crn_queues::CSV_VERSION_HEADER);
    for (alpha, cost) in &curve {
        csv.push_str(&format!("{alpha},{cost}\n"));
    }
    report_path(&out.write("cost_curve.csv", csv.as_bytes())?);

    let report = OptimizeReport {
        config,
        effective_model: model,
        vertices: VertexBlock::from(&vertices),
        interval,
        feasible: true,
        explanation: None,
        coefficients: Some(optimize::coefficients(&vertices)),
        optimum: Some(optimum),
    };
    report_path(&out.write_json("optimize.json", &report)?);
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalyticComparison {
    d_pu_law: Option<f64>,
    d_su_law: Option<f64>,
    rel_diff_d_pu: Option<f64>,
    rel_diff_d_su: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DecoupledComparison {
    aggregate_model: NetworkModel<f64>,
    estimate: SimEstimate<f64>,
    rel_diff_d_pu: Option<f64>,
    rel_diff_d_su: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    config: &'a RunConfig,
    topology: Topology,
    sim_config: SimConfig,
    estimate: SimEstimate<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<AnalyticComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decoupled_equivalent: Option<DecoupledComparison>,
}

fn compare_analytic(
    model: &NetworkModel<f64>,
    estimate: &SimEstimate<f64>,
) -> Option<AnalyticComparison> {
    if !model.check_stability().is_stable() {
        return None;
    }
    let law = law_delays(model).ok()?;
    Some(AnalyticComparison {
        d_pu_law: law.d_pu,
        d_su_law: law.d_su,
        rel_diff_d_pu: estimate
            .d_pu
            .zip(law.d_pu)
            .map(|(sim, law)| relative_error(sim, law)),
        rel_diff_d_su: estimate
            .d_su
            .zip(law.d_su)
            .map(|(sim, law)| relative_error(sim, law)),
    })
}

fn run_estimate<F>(sim_cfg: &SimConfig, runner: F) -> crn_queues::Result<SimEstimate<f64>>
where
    F: Fn(&SimConfig) -> crn_queues::Result<SimEstimate<f64>> + Sync,
{
    if sim_cfg.replications >= 2 {
        replicate(sim_cfg, runner)
    } else {
        runner(sim_cfg)
    }
}

pub fn simulate(config: &RunConfig, out: &OutDir, emit_event_log: bool) -> Result<()> {
    let sim_block = config.simulation.unwrap_or_default();
    let sim_cfg = sim_block.resolve();
    let mut log_cfg = sim_cfg;
    log_cfg.seed = replication_seed(sim_cfg.seed, 0);
    log_cfg.replications = 1;

    let report = match sim_cfg.topology {
        Topology::Decoupled => {
            let model = config.effective_model()?;
            let estimate = run_estimate(&sim_cfg, |c| run_decoupled(&model, c))?;
            let analytic = compare_analytic(&model, &estimate);
            if emit_event_log {
                let (_, log) = run_decoupled_logged(&model, &log_cfg)?;
                write_event_log(out, &log)?;
            }
            SimulateReport {
                config,
                topology: Topology::Decoupled,
                sim_config: sim_cfg,
                estimate,
                analytic,
                decoupled_equivalent: None,
            }
        }
        Topology::Coupled => {
            let spec = config
                .coupled
                .clone()
                .ok_or_else(|| anyhow!("coupled topology needs a `coupled` block in the config"))?;
            let estimate = run_estimate(&sim_cfg, |c| run_coupled(&spec, c))?;
            if emit_event_log {
                let (_, log) = run_coupled_logged(&spec, &log_cfg)?;
                write_event_log(out, &log)?;
            }
            // Paired run of the aggregated decoupled model, when it exists.
            let decoupled_equivalent = spec
                .aggregate_model()
                .filter(|m| m.check_stability().is_stable())
                .map(|aggregate| -> crn_queues::Result<DecoupledComparison> {
                    let paired = run_estimate(&sim_cfg, |c| run_decoupled(&aggregate, c))?;
                    Ok(DecoupledComparison {
                        aggregate_model: aggregate,
                        rel_diff_d_pu: estimate
                            .d_pu
                            .zip(paired.d_pu)
                            .map(|(a, b)| relative_error(a, b)),
                        rel_diff_d_su: estimate
                            .d_su
                            .zip(paired.d_su)
                            .map(|(a, b)| relative_error(a, b)),
                        estimate: paired,
                    })
                })
                .transpose()?;
            let analytic = spec
                .aggregate_model()
                .and_then(|m| compare_analytic(&m, &estimate));
            SimulateReport {
                config,
                topology: Topology::Coupled,
                sim_config: sim_cfg,
                estimate,
                analytic,
                decoupled_equivalent,
            }
        }
    };
    report_path(&out.write_json("simulate.json", &report)?);
    Ok(())
}

fn write_event_log(out: &OutDir, log: &EventLog) -> Result<()> {
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    report_path(&out.write("events.csv", &csv)?);
    Ok(())
}
