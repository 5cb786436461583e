//! Batch commands over session-log files: `simulate`, `fit`, `filter`,
//! `ground` and `evaluate-policy`.
//!
//! Each command is a plain function returning a report value; rendering to
//! text is separate so the binary stays a thin argument parser.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{fit_grounding, three_trial_average, GroundingError, GroundingFit};
use crate::iohmm::{
    baum_welch, canonicalize_states, filter_predictive, FitConfig, InputCounts, ModelError,
    ModelParams,
};
use crate::simulator::{evaluate_policy, simulate_cohort, EnvConfig, MessagePolicy, PolicyEstimate, SimError};
use crate::trust::{
    p_high, paper_reference_params, session_filter_steps, session_to_sequence, trust_alphabet,
    write_log_string, DomainError, HumanAction, LogError, SessionLog, TransitionEvent, HIGH_TRUST,
    TRUST_ORDERING,
};

pub const FIT_REPORT_SCHEMA: &str = "trust-iohmm/fit-report/v1";
pub const GROUND_REPORT_SCHEMA: &str = "trust-iohmm/ground-report/v1";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a model or fit report: {source}", path.display())]
    ModelFile {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no sessions found in the input")]
    NoSessions,
    #[error("no usable (non-practice) sequences to fit")]
    NoUsableSequences,
    #[error("no sessions with varying self-reports")]
    NoSelfReports,
    #[error("at least one policy is required")]
    NoPolicies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ReportFormat {
    #[default]
    Table,
    Structured,
}

/// Reads a model from JSON: either bare parameters or a fit report.
pub fn load_model(path: &Path) -> Result<ModelParams, AnalysisError> {
    let text = std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if let Ok(report) = serde_json::from_str::<ComparisonReport>(&text) {
        return Ok(report.fitted);
    }
    serde_json::from_str::<ModelParams>(&text).map_err(|source| AnalysisError::ModelFile {
        path: path.to_path_buf(),
        source,
    })
}

/// `--paper-params` or `--model <file>`; the reference model when neither is given.
pub fn resolve_model(model: Option<&Path>) -> Result<ModelParams, AnalysisError> {
    match model {
        Some(path) => load_model(path),
        None => Ok(paper_reference_params()),
    }
}

// ---------------------------------------------------------------- fit

/// Fitted-versus-reference comparison written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    pub fitted: ModelParams,
    pub reference: ModelParams,
    pub deviations: Deviations,
    pub max_deviation: f64,
    pub input_counts: InputCounts,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub sessions_used: usize,
    pub practice_sessions_excluded: usize,
    /// States could not be ordered; labels are as fitted.
    pub label_tie: bool,
    pub warnings: Vec<String>,
}

/// Elementwise |fitted - reference|, shaped like the parameter tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviations {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub emission: Vec<Vec<Vec<f64>>>,
}

impl Deviations {
    fn between(a: &ModelParams, b: &ModelParams) -> Self {
        let diff_rows = |x: &[Vec<Vec<f64>>], y: &[Vec<Vec<f64>>]| -> Vec<Vec<Vec<f64>>> {
            x.iter()
                .zip(y)
                .map(|(tx, ty)| {
                    tx.iter()
                        .zip(ty)
                        .map(|(rx, ry)| rx.iter().zip(ry).map(|(p, q)| (p - q).abs()).collect())
                        .collect()
                })
                .collect()
        };
        Deviations {
            initial: a.initial().iter().zip(b.initial()).map(|(p, q)| (p - q).abs()).collect(),
            transition: diff_rows(a.transition_tensor(), b.transition_tensor()),
            emission: diff_rows(a.emission_tensor(), b.emission_tensor()),
        }
    }
}

/// Pools non-practice sessions, fits with Baum-Welch, canonicalizes the
/// state labels and compares against the reference model.
pub fn cmd_fit(sessions: &[SessionLog], config: &FitConfig) -> Result<ComparisonReport, AnalysisError> {
    if sessions.is_empty() {
        return Err(AnalysisError::NoSessions);
    }
    let used: Vec<&SessionLog> = sessions.iter().filter(|s| !s.practice).collect();
    let sequences = used
        .iter()
        .map(|s| session_to_sequence(s))
        .collect::<Result<Vec<_>, _>>()?;
    if sequences.is_empty() {
        return Err(AnalysisError::NoUsableSequences);
    }

    let fit = baum_welch(&trust_alphabet(), &sequences, config, None)?;
    let canonical = canonicalize_states(&fit.params, TRUST_ORDERING)?;
    let reference = paper_reference_params();
    let deviations = Deviations::between(&canonical.params, &reference);
    let max_deviation = canonical.params.max_abs_deviation(&reference)?;

    let mut warnings = Vec::new();
    for u in fit.input_symbol_counts.unobserved_transition_inputs() {
        let label = TransitionEvent::from_index(u).map(|e| e.label()).unwrap_or("?");
        warnings.push(format!("transition input {label} never observed; rows left at initialization"));
    }
    for c in fit.input_symbol_counts.unobserved_emission_inputs() {
        warnings.push(format!("complexity {c} never observed; emission rows left at initialization"));
    }
    if canonical.tie {
        warnings.push("states tie on P(auto | low complexity); labels not canonicalized".into());
    }
    if !fit.converged {
        warnings.push(format!("EM stopped at the iteration limit ({})", config.max_iterations));
    }

    Ok(ComparisonReport {
        schema: FIT_REPORT_SCHEMA.to_string(),
        fitted: canonical.params,
        reference,
        deviations,
        max_deviation,
        input_counts: fit.input_symbol_counts.clone(),
        log_likelihood: fit.log_likelihood(),
        converged: fit.converged,
        iterations: fit.log_likelihood_trace.len() - 1,
        sessions_used: sequences.len(),
        practice_sessions_excluded: sessions.len() - used.len(),
        label_tie: canonical.tie,
        warnings,
    })
}

impl ComparisonReport {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => {
                serde_json::to_string_pretty(self).expect("report serializes") + "\n"
            }
            ReportFormat::Table => self.render_table(),
        }
    }

    fn render_table(&self) -> String {
        let mut out = String::new();
        let f = &self.fitted;
        let r = &self.reference;
        let _ = writeln!(
            out,
            "sessions: {}  (practice excluded: {})  log-likelihood: {:.4}  iterations: {}  converged: {}",
            self.sessions_used, self.practice_sessions_excluded, self.log_likelihood, self.iterations, self.converged
        );
        let _ = writeln!(out, "\n{:<24} {:>8} {:>10} {:>8}", "parameter", "fitted", "reference", "|dev|");
        let mut row = |name: String, a: f64, b: f64| {
            let _ = writeln!(out, "{:<24} {:>8.4} {:>10.4} {:>8.4}", name, a, b, (a - b).abs());
        };
        row("P(T1 = high)".into(), f.initial()[HIGH_TRUST], r.initial()[HIGH_TRUST]);
        for (c, name) in [(0, "low"), (1, "high")] {
            for (s, state) in [(0, "high"), (1, "low")] {
                row(
                    format!("P(auto | {state}, C={name})"),
                    f.emission(c, s, HumanAction::AutoDeploy.index()),
                    r.emission(c, s, HumanAction::AutoDeploy.index()),
                );
            }
        }
        for event in TransitionEvent::ALL {
            let u = event.index();
            row(format!("{} stay-high", event.label()), f.transition(u, 0, 0), r.transition(u, 0, 0));
            row(format!("{} low->high", event.label()), f.transition(u, 1, 0), r.transition(u, 1, 0));
        }
        let _ = writeln!(out, "\nmax |deviation|: {:.4}", self.max_deviation);
        let _ = writeln!(out, "\n{:<14} {:>8}", "event", "count");
        for event in TransitionEvent::ALL {
            let _ = writeln!(out, "{:<14} {:>8}", event.label(), self.input_counts.transition[event.index()]);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

// ---------------------------------------------------------------- filter

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRow {
    pub session_id: String,
    pub trial: u32,
    /// Predictive P(high trust) at the start of the trial.
    pub p_high: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterTable {
    pub rows: Vec<FilterRow>,
    /// Sessions the model could not explain, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Predictive high-trust probability trace for one session, one value per trial.
pub fn session_trust_trace(params: &ModelParams, log: &SessionLog) -> Result<Vec<f64>, AnalysisError> {
    let steps = session_filter_steps(log)?;
    let beliefs = filter_predictive(params, &steps)?;
    Ok(beliefs[..steps.len()].iter().map(p_high).collect())
}

pub fn cmd_filter(sessions: &[SessionLog], params: &ModelParams) -> Result<FilterTable, AnalysisError> {
    if sessions.is_empty() {
        return Err(AnalysisError::NoSessions);
    }
    let mut table = FilterTable::default();
    for log in sessions {
        match session_trust_trace(params, log) {
            Ok(trace) => table.rows.extend(log.trials().iter().zip(trace).map(|(t, p)| FilterRow {
                session_id: log.participant_id.clone(),
                trial: t.trial_index,
                p_high: p,
            })),
            Err(AnalysisError::Model(e @ ModelError::ImpossibleSequence { .. })) => {
                table.skipped.push((log.participant_id.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(table)
}

impl FilterTable {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => serde_json::to_string_pretty(self).expect("serializes") + "\n",
            ReportFormat::Table => {
                let mut out = String::from("session_id,trial,p_high\n");
                for r in &self.rows {
                    let _ = writeln!(out, "{},{},{}", r.session_id, r.trial, r.p_high);
                }
                out
            }
        }
    }
}

// ---------------------------------------------------------------- ground

/// Which (self-report, trust) pairs the logistic curve is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Median three-trial trust per distinct three-trial report average.
    #[default]
    Median,
    /// Every per-session three-trial pair.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingPair {
    pub session_id: String,
    /// 1-based group of three trials.
    pub group: usize,
    pub report_avg: f64,
    pub p_high_avg: f64,
    /// Group holds fewer than three trials.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianPair {
    pub report_avg: f64,
    pub median_p_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub schema: String,
    pub mode: PairMode,
    pub pairs: Vec<GroundingPair>,
    pub medians: Vec<MedianPair>,
    pub fit: GroundingFit,
    pub sessions_used: usize,
    pub warnings: Vec<String>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Pairs three-trial averages of self-reports and predictive trust, then
/// fits the logistic grounding curve.
///
/// Trial `t`'s report is paired with the predictive belief at the start of
/// trial `t`. Only trials with a report contribute; sessions whose reports
/// never vary are excluded.
pub fn cmd_ground(
    sessions: &[SessionLog],
    params: &ModelParams,
    mode: PairMode,
) -> Result<GroundingReport, AnalysisError> {
    if sessions.is_empty() {
        return Err(AnalysisError::NoSessions);
    }
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    let mut sessions_used = 0;

    for log in sessions.iter().filter(|s| !s.practice) {
        let reported: Vec<(f64, usize)> = log
            .trials()
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.reported_trust.map(|r| (r as f64, i)))
            .collect();
        if reported.is_empty() {
            continue;
        }
        if reported.iter().all(|(r, _)| *r == reported[0].0) {
            warnings.push(format!(
                "session {} excluded: self-reports never vary",
                log.participant_id
            ));
            continue;
        }
        let trace = match session_trust_trace(params, log) {
            Ok(trace) => trace,
            Err(AnalysisError::Model(e @ ModelError::ImpossibleSequence { .. })) => {
                warnings.push(format!("session {} excluded: {e}", log.participant_id));
                continue;
            }
            Err(e) => return Err(e),
        };
        let reports: Vec<f64> = reported.iter().map(|(r, _)| *r).collect();
        let probs: Vec<f64> = reported.iter().map(|(_, i)| trace[*i]).collect();
        let r_avg = three_trial_average(&reports);
        let p_avg = three_trial_average(&probs);
        let n_groups = r_avg.values.len();
        for (g, (r, p)) in r_avg.values.iter().zip(&p_avg.values).enumerate() {
            pairs.push(GroundingPair {
                session_id: log.participant_id.clone(),
                group: g + 1,
                report_avg: *r,
                p_high_avg: *p,
                partial: r_avg.partial_tail && g + 1 == n_groups,
            });
        }
        sessions_used += 1;
    }
    if pairs.is_empty() {
        return Err(AnalysisError::NoSelfReports);
    }

    // Report averages are multiples of 1/3 (or 1/2 for a partial tail);
    // key on sixths to group exact levels.
    let mut levels: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for p in &pairs {
        levels.entry((p.report_avg * 6.0).round() as i64).or_default().push(p.p_high_avg);
    }
    let medians: Vec<MedianPair> = levels
        .into_iter()
        .map(|(key, mut ps)| MedianPair {
            report_avg: key as f64 / 6.0,
            n: ps.len(),
            median_p_high: median(&mut ps),
        })
        .collect();

    let fit_input: Vec<(f64, f64)> = match mode {
        PairMode::Median => medians.iter().map(|m| (m.report_avg, m.median_p_high)).collect(),
        PairMode::Mean => pairs.iter().map(|p| (p.report_avg, p.p_high_avg)).collect(),
    };
    let fit = fit_grounding(&fit_input)?;
    warnings.extend(fit.warnings.iter().cloned());

    Ok(GroundingReport {
        schema: GROUND_REPORT_SCHEMA.to_string(),
        mode,
        pairs,
        medians,
        fit,
        sessions_used,
        warnings,
    })
}

impl GroundingReport {
    /// Pair table (`source` is `pair` or `median`).
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("source,session_id,group,report_avg,p_high_avg,n\n");
        for p in &self.pairs {
            let _ = writeln!(out, "pair,{},{},{},{},1", p.session_id, p.group, p.report_avg, p.p_high_avg);
        }
        for m in &self.medians {
            let _ = writeln!(out, "median,,,{},{},{}", m.report_avg, m.median_p_high, m.n);
        }
        out
    }

    pub fn curve_csv(&self) -> String {
        let c = &self.fit.curve;
        let mode = match self.mode {
            PairMode::Median => "median",
            PairMode::Mean => "mean",
        };
        format!(
            "asymptote,slope,midpoint,residual_norm,n_pairs,mode\n{},{},{},{},{},{}\n",
            c.asymptote,
            c.slope,
            c.midpoint,
            self.fit.residual_norm,
            match self.mode {
                PairMode::Median => self.medians.len(),
                PairMode::Mean => self.pairs.len(),
            },
            mode
        )
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => serde_json::to_string_pretty(self).expect("serializes") + "\n",
            ReportFormat::Table => format!("{}\n{}", self.pairs_csv(), self.curve_csv()),
        }
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub sessions: usize,
    pub trials_per_session: u32,
    pub mean_delivery_score: f64,
    pub auto_deploy_fraction: f64,
    pub failure_messages: usize,
    pub files: Vec<PathBuf>,
}

impl SimulateSummary {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => serde_json::to_string_pretty(self).expect("serializes") + "\n",
            ReportFormat::Table => format!(
                "sessions: {}\ntrials per session: {}\nmean delivery score: {:.2}\nauto-deploy fraction: {:.4}\nfailure messages: {}\n",
                self.sessions,
                self.trials_per_session,
                self.mean_delivery_score,
                self.auto_deploy_fraction,
                self.failure_messages
            ),
        }
    }
}

#[derive(Serialize)]
struct HiddenTrustLine<'a> {
    participant_id: &'a str,
    trial: u32,
    trust: &'static str,
}

/// Simulates a cohort and writes `<id>.jsonl` plus a `<id>.hidden.jsonl`
/// sidecar with the true trust states per session into `out_dir`.
pub fn cmd_simulate(
    params: &ModelParams,
    env: &EnvConfig,
    policy: &MessagePolicy,
    n_participants: usize,
    out_dir: &Path,
) -> Result<SimulateSummary, AnalysisError> {
    let cohort = simulate_cohort(params, env, policy, n_participants)?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| AnalysisError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut files = Vec::new();
    let mut autos = 0usize;
    let mut failures = 0usize;
    let mut trials = 0usize;
    for session in &cohort {
        let id = &session.log.participant_id;
        let log_path = out_dir.join(format!("{id}.jsonl"));
        std::fs::write(&log_path, write_log_string(std::slice::from_ref(&session.log)))
            .map_err(io_err(&log_path))?;

        let mut hidden = String::new();
        for (t, state) in session.hidden_trust.iter().enumerate() {
            let line = HiddenTrustLine {
                participant_id: id,
                trial: t as u32 + 1,
                trust: if *state == HIGH_TRUST { "H" } else { "L" },
            };
            hidden.push_str(&serde_json::to_string(&line).expect("serializes"));
            hidden.push('\n');
        }
        let hidden_path = out_dir.join(format!("{id}.hidden.jsonl"));
        std::fs::write(&hidden_path, hidden).map_err(io_err(&hidden_path))?;
        files.push(log_path);
        files.push(hidden_path);

        for t in session.log.trials() {
            trials += 1;
            autos += (t.human_action == HumanAction::AutoDeploy) as usize;
            failures += t.robot_message.is_strategy() as usize;
        }
    }
    Ok(SimulateSummary {
        sessions: cohort.len(),
        trials_per_session: env.n_trials,
        mean_delivery_score: cohort.iter().map(|s| s.total_delivery_score as f64).sum::<f64>() / cohort.len() as f64,
        auto_deploy_fraction: autos as f64 / trials as f64,
        failure_messages: failures,
        files,
    })
}

// ---------------------------------------------------------------- evaluate-policy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub n_trials: u32,
    pub estimates: Vec<PolicyEstimate>,
}

/// Parses policy names and compares them on common random numbers.
pub fn cmd_evaluate_policy(
    params: &ModelParams,
    env: &EnvConfig,
    policy_names: &[String],
    n_mc: usize,
) -> Result<PolicyTable, AnalysisError> {
    if policy_names.is_empty() {
        return Err(AnalysisError::NoPolicies);
    }
    let policies = policy_names
        .iter()
        .map(|n| n.parse::<MessagePolicy>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolicyTable {
        n_trials: env.n_trials,
        estimates: evaluate_policy(params, env, &policies, n_mc)?,
    })
}

impl PolicyTable {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => serde_json::to_string_pretty(self).expect("serializes") + "\n",
            ReportFormat::Table => {
                let mut out = String::from("policy,mean,std_error,n_mc\n");
                for e in &self.estimates {
                    let _ = writeln!(out, "{},{},{},{}", e.policy, e.mean, e.std_error, e.n_mc);
                }
                out
            }
        }
    }
}
