use std::path::Path;

use pca_transfer::estimators::{self, CovarianceEstimate, CovarianceKind, Dataset, StudySummary};
use pca_transfer::grassmann::{self, WeightedProjectorSet};
use pca_transfer::simulation::{
    self, NormalityConfig, RateConfig, RateTerm, ReplicationValue, ScenarioConfig,
};
use pca_transfer::transfer::{self, Init, IterationRecord, TransferConfig, Variant, Weighting};
use pca_transfer::diagnostics;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::io;
use crate::{
    ArArgs, BarycenterArgs, CliError, Command, ExperimentArgs, InitArg, KindArg, StudyFile, SummarizeArgs,
    TransferArgs, VariantArg, WeightingArg,
};

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Summarize(a) => summarize(a),
        Command::Barycenter(a) => barycenter(a),
        Command::Transfer(a) => run_transfer(a),
        Command::Experiment(a) => experiment(a),
        Command::Ar(a) => ar(a),
    }
}

fn weighting(w: WeightingArg) -> Weighting {
    match w {
        WeightingArg::RawN => Weighting::RawN,
        WeightingArg::Effective => Weighting::Effective,
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn summarize(a: &SummarizeArgs) -> Result<(), CliError> {
    let (cov, source) = match (&a.input, &a.cov) {
        (Some(input), _) => {
            let data = Dataset::new(io::read_matrix(input, a.header)?)?;
            let cov = match a.kind {
                KindArg::Classical => estimators::sample_covariance(&data, a.center)?,
                KindArg::Elliptical => {
                    let pairs = a.max_pairs.or_else(|| estimators::default_max_pairs(data.n()));
                    estimators::kendall_tau(&data, pairs, a.seed)?
                }
            };
            (cov, input)
        }
        (None, Some(path)) => {
            let m = io::read_matrix(path, false)?;
            let n = a.n.ok_or_else(|| CliError::Usage("--cov requires --n".into()))?;
            let mut cov = CovarianceEstimate::external(m, n)?;
            if a.kind == KindArg::Elliptical {
                cov.kind = CovarianceKind::KendallTau;
            }
            (cov, path)
        }
        (None, None) => return Err(CliError::Usage("one of --input or --cov is required".into())),
    };
    let mut study = transfer::individual_pca(&cov, a.r)?;
    study.id = a.id.clone().unwrap_or_else(|| file_stem(source));
    if study.degenerate_gap {
        eprintln!("warning: eigenvalue gap at rank {} is numerically zero", a.r);
    }
    let kind = match a.kind {
        KindArg::Classical => "classical",
        KindArg::Elliptical => "elliptical",
    };
    StudyFile::from_summary(&study, kind).write(&a.out)
}

fn read_studies(paths: &[std::path::PathBuf]) -> Result<Vec<StudySummary>, CliError> {
    let studies = paths
        .iter()
        .map(|p| StudyFile::read(p)?.to_summary())
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = studies.first() {
        for (s, path) in studies.iter().zip(paths) {
            if s.dim() != first.dim() {
                return Err(CliError::Data(format!(
                    "{}: dimension {} differs from {}",
                    path.display(),
                    s.dim(),
                    first.dim()
                )));
            }
        }
    }
    Ok(studies)
}

#[derive(Serialize)]
struct BarycenterReport {
    r_s: usize,
    gap: f64,
    degenerate: bool,
    objective: f64,
}

fn barycenter(a: &BarycenterArgs) -> Result<(), CliError> {
    let studies = read_studies(&a.studies)?;
    let w = weighting(a.weighting);
    let set = WeightedProjectorSet::new(studies.iter().map(|s| (s.projector.clone(), w.weight(s))).collect())?;
    let bary = grassmann::barycenter(&set, a.r_s)?;
    if bary.degenerate {
        eprintln!("warning: barycenter eigenvalue gap {:e} is below tolerance", bary.gap);
    }
    let out = StudyFile {
        study_id: a.id.clone(),
        kind: "barycenter".into(),
        n: studies.iter().map(|s| s.n).sum(),
        n_eff: studies.iter().map(|s| s.n_eff).sum(),
        basis: bary.projector.orthonormal_basis(),
    };
    out.write(&a.out)?;
    print_json(&BarycenterReport { r_s: a.r_s, gap: bary.gap, degenerate: bary.degenerate, objective: bary.objective })
}

#[derive(Serialize)]
struct TransferConfigEcho {
    r_s: usize,
    r_0: usize,
    tau: f64,
    variant: Variant,
    weighting: Weighting,
    max_iter: usize,
    tol: f64,
    alpha: f64,
    init: String,
    warm_start_steps: usize,
    oracle: bool,
}

#[derive(Serialize)]
struct TransferReport<'a> {
    target: &'a str,
    selected: &'a [String],
    converged: bool,
    objective: f64,
    start_objectives: &'a [f64],
    config: TransferConfigEcho,
    iterations: &'a [IterationRecord],
}

fn run_transfer(a: &TransferArgs) -> Result<(), CliError> {
    let target_file = StudyFile::read(&a.target)?;
    let target = target_file.to_summary()?;
    let sources = read_studies(&a.sources)?;
    if let Some(s) = sources.iter().find(|s| s.dim() != target.dim()) {
        return Err(CliError::Data(format!("source {:?} has dimension {}, target {}", s.id, s.dim(), target.dim())));
    }
    let cov_matrix = io::read_matrix(&a.target_cov, false)?;
    if cov_matrix.nrows() != target.dim() || cov_matrix.ncols() != target.dim() {
        return Err(CliError::Data(format!(
            "target covariance is {}x{}, expected {p}x{p}",
            cov_matrix.nrows(),
            cov_matrix.ncols(),
            p = target.dim()
        )));
    }
    let target_cov = CovarianceEstimate::external(cov_matrix, target.n)?;

    let mut cfg = TransferConfig::new(a.r_s, a.r_0);
    if let Some(tau) = a.tau {
        cfg.tau = tau;
    }
    cfg.variant = match a.variant {
        VariantArg::Kmeans => Variant::Kmeans,
        VariantArg::Gradient => Variant::Gradient,
        VariantArg::Newton => Variant::Newton,
    };
    cfg.weighting = weighting(a.weighting);
    cfg.max_iter = a.max_iter;
    cfg.tol = a.tol;
    cfg.alpha = a.alpha;
    cfg.warm_start_steps = a.warm_start_steps;
    let init_label;
    cfg.init = match (&a.init_file, a.init) {
        (Some(path), _) => {
            init_label = format!("file:{}", path.display());
            Init::Explicit(StudyFile::read(path)?.projector()?)
        }
        (None, InitArg::BlindBarycenter) => {
            init_label = "blind_barycenter".into();
            Init::BlindBarycenter
        }
        (None, InitArg::TargetTop) => {
            init_label = "target_top".into();
            Init::TargetTop
        }
        (None, InitArg::MultiStart) => {
            init_label = format!("multi_start(m={}, seed={})", a.starts, a.init_seed);
            Init::MultiStart { m: a.starts, seed: a.init_seed }
        }
    };
    cfg.validate()?;

    let result = if a.oracle {
        let mut all = vec![target.clone()];
        all.extend(sources.iter().cloned());
        transfer::oracle_transfer(&all, &target_cov, &cfg)?
    } else {
        transfer::non_oracle_transfer(&target, &target_cov, &sources, &cfg)?
    };
    if !result.converged {
        eprintln!("warning: no convergence within {} iterations", cfg.max_iter);
    }
    let combined = StudyFile {
        study_id: target.id.clone(),
        kind: "transfer".into(),
        n: target.n,
        n_eff: target.n_eff,
        basis: result.combined.orthonormal_basis(),
    };
    combined.write(&a.out)?;
    let report = TransferReport {
        target: &target.id,
        selected: &result.selected,
        converged: result.converged,
        objective: result.objective,
        start_objectives: &result.start_objectives,
        config: TransferConfigEcho {
            r_s: cfg.r_s,
            r_0: cfg.r_0,
            tau: cfg.tau,
            variant: cfg.variant,
            weighting: cfg.weighting,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
            alpha: cfg.alpha,
            init: init_label,
            warm_start_steps: cfg.warm_start_steps,
            oracle: a.oracle,
        },
        iterations: &result.trace,
    };
    io::write_json(&a.report, &report)
}

/// `base` with the top-level keys of the TOML file at `path` replaced.
fn with_overrides<T: Serialize + DeserializeOwned + Clone>(base: &T, path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(base.clone());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let overrides: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| CliError::Data(e.to_string()))?;
    merged.extend(overrides);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_outputs<T: Serialize>(dir: &Path, report: &T, values: &[ReplicationValue]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    io::write_text(&dir.join("values.csv"), &simulation::values_csv(values))?;
    io::write_json(&dir.join("report.json"), report)
}

fn experiment(a: &ExperimentArgs) -> Result<(), CliError> {
    let config = a.config.as_deref();
    if let Some(base) = ScenarioConfig::preset(&a.preset) {
        let mut cfg = with_overrides(&base, config)?;
        if let Some(k) = a.k {
            cfg.k = k;
        }
        if let Some(r) = a.reps {
            cfg.replications = r;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        let report = simulation::run_scenario(&cfg)?;
        for m in &report.methods {
            eprintln!("{:<16} mean D = {:.4} (se {:.4}, n = {})", m.method, m.mean, m.se, m.count);
        }
        return write_outputs(&a.out, &report, &report.values);
    }
    if a.k.is_some() {
        return Err(CliError::Usage("--K only applies to scenario presets".into()));
    }
    if let Some(term) = a.preset.strip_prefix("rate-") {
        let term = RateTerm::parse(term).ok_or_else(|| CliError::Usage(format!("unknown preset {:?}", a.preset)))?;
        let mut cfg: RateConfig = with_overrides(&RateConfig::preset(term), config)?;
        if let Some(r) = a.reps {
            cfg.replications = r;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        let report = simulation::run_rate_experiment(&cfg)?;
        for s in &report.series {
            eprintln!("{:<32} slope = {:.4}", s.label, s.slope);
        }
        return write_outputs(&a.out, &report, &report.values);
    }
    if a.preset == "normality-gaussian" {
        let mut cfg: NormalityConfig = with_overrides(&NormalityConfig::default(), config)?;
        if let Some(r) = a.reps {
            cfg.replications = r;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        let report = simulation::run_normality_experiment(&cfg)?;
        eprintln!("KS(z_hat) = {:.4}, KS(z_tilde) = {:.4}", report.ks_hat, report.ks_tilde);
        return write_outputs(&a.out, &report, &report.values());
    }
    Err(CliError::Usage(format!("unknown preset {:?}", a.preset)))
}

#[derive(Serialize)]
struct ArReport {
    ar: f64,
    rows: usize,
}

fn ar(a: &ArArgs) -> Result<(), CliError> {
    let t = StudyFile::read(&a.transfer)?.projector()?;
    let b = StudyFile::read(&a.baseline)?.projector()?;
    let data = Dataset::new(io::read_matrix(&a.test, a.header)?)?;
    let ar = diagnostics::ar_ratio(&t, &b, &data)?;
    print_json(&ArReport { ar, rows: data.n() })
}
