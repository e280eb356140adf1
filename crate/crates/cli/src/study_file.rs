//! Plain-text exchange format for one study's subspace estimate.
//!
//! ```text
//! # pca-transfer study
//! study_id=s0
//! kind=classical
//! p=6
//! r=2
//! n=100
//! n_eff=2.5000000000000000e1
//! basis
//! <p rows of r comma-separated values>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use pca_transfer::estimators::StudySummary;
use pca_transfer::linalg;
use pca_transfer::Projector;

use crate::CliError;

const MAGIC: &str = "# pca-transfer study";
const ACCEPT_TOL: f64 = 1e-6;
const REPAIR_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyFile {
    pub study_id: String,
    /// Free-form provenance label such as `classical`, `elliptical`,
    /// `external`, `barycenter` or `transfer`.
    pub kind: String,
    pub n: usize,
    pub n_eff: f64,
    /// `p x r`, column-orthonormal.
    pub basis: DMatrix<f64>,
}

impl StudyFile {
    pub fn p(&self) -> usize {
        self.basis.nrows()
    }

    pub fn r(&self) -> usize {
        self.basis.ncols()
    }

    pub fn from_summary(s: &StudySummary, kind: &str) -> Self {
        StudyFile {
            study_id: s.id.clone(),
            kind: kind.to_string(),
            n: s.n,
            n_eff: s.n_eff,
            basis: s.projector.orthonormal_basis(),
        }
    }

    pub fn to_summary(&self) -> Result<StudySummary, CliError> {
        let projector = Projector::from_basis(self.basis.clone())?;
        Ok(StudySummary::new(self.study_id.clone(), projector, self.n, self.n_eff)?)
    }

    pub fn projector(&self) -> Result<Projector, CliError> {
        Ok(Projector::from_basis(self.basis.clone())?)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "study_id={}", self.study_id).unwrap();
        writeln!(out, "kind={}", self.kind).unwrap();
        writeln!(out, "p={}", self.p()).unwrap();
        writeln!(out, "r={}", self.r()).unwrap();
        writeln!(out, "n={}", self.n).unwrap();
        writeln!(out, "n_eff={:.16e}", self.n_eff).unwrap();
        out.push_str("basis\n");
        for i in 0..self.p() {
            let row: Vec<String> = (0..self.r()).map(|j| format!("{:.16e}", self.basis[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the format; a basis off orthonormality by at most `1e-3` is
    /// re-orthonormalized, with a warning on stderr past `1e-6`.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Data(format!("{origin}: {msg}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim_end() == MAGIC => {}
            _ => return Err(bad("missing study file header".into())),
        }
        let (mut id, mut kind, mut p, mut r, mut n, mut n_eff) = (None, None, None, None, None, None);
        loop {
            let Some((ln, line)) = lines.next() else {
                return Err(bad("missing basis section".into()));
            };
            let line = line.trim_end();
            if line == "basis" {
                break;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value", ln + 1)))?;
            let int = |v: &str| v.trim().parse::<usize>().map_err(|e| bad(format!("line {}: {e}", ln + 1)));
            match key.trim() {
                "study_id" => id = Some(value.to_string()),
                "kind" => kind = Some(value.trim().to_string()),
                "p" => p = Some(int(value)?),
                "r" => r = Some(int(value)?),
                "n" => n = Some(int(value)?),
                "n_eff" => {
                    n_eff = Some(value.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", ln + 1)))?)
                }
                other => return Err(bad(format!("line {}: unknown key {other:?}", ln + 1))),
            }
        }
        let missing = |k: &str| bad(format!("missing header field {k}"));
        let (p, r) = (p.ok_or_else(|| missing("p"))?, r.ok_or_else(|| missing("r"))?);
        if r > p {
            return Err(bad(format!("rank {r} exceeds dimension {p}")));
        }
        let mut basis = DMatrix::<f64>::zeros(p, r);
        for i in 0..p {
            let Some((ln, line)) = lines.next() else {
                return Err(bad(format!("basis has {i} rows, expected {p}")));
            };
            let values: Vec<&str> = if r == 0 { Vec::new() } else { line.trim_end().split(',').collect() };
            if values.len() != r {
                return Err(bad(format!("line {}: expected {r} values, found {}", ln + 1, values.len())));
            }
            for (j, v) in values.iter().enumerate() {
                let x: f64 = v.trim().parse().map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
                if !x.is_finite() {
                    return Err(bad(format!("line {}: non-finite value", ln + 1)));
                }
                basis[(i, j)] = x;
            }
        }
        if lines.any(|(_, l)| !l.trim().is_empty()) {
            return Err(bad(format!("basis has more than {p} rows")));
        }
        if r > 0 {
            let err = linalg::orthonormality_error(&basis);
            if err > REPAIR_TOL {
                return Err(bad(format!("basis is not orthonormal (max deviation {err:e})")));
            }
            if err > ACCEPT_TOL {
                eprintln!("warning: {origin}: re-orthonormalizing basis (max deviation {err:e})");
            }
            if err > 0.0 {
                basis = linalg::gram_schmidt(&basis).ok_or_else(|| bad("basis is rank deficient".into()))?;
            }
        }
        Ok(StudyFile {
            study_id: id.ok_or_else(|| missing("study_id"))?,
            kind: kind.ok_or_else(|| missing("kind"))?,
            n: n.ok_or_else(|| missing("n"))?,
            n_eff: n_eff.ok_or_else(|| missing("n_eff"))?,
            basis,
        })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if self.study_id.contains('\n') {
            return Err(CliError::Data("study id must not contain a newline".into()));
        }
        std::fs::write(path, self.render()).map_err(|e| CliError::io(path, e))
    }
}
