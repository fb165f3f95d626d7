//! Check records and suite reports.
//!
//! Every record carries the anchor of the statement it probes, per-atom
//! residuals, and optionally a refinement-slope check. Reports serialize to
//! canonical JSON (deterministic field and record order, no wall-clock data)
//! and to a fixed-width text table.

use crate::measure::RScalar;
use crate::util::decay_order;
use serde::Serialize;
use std::fmt::Write as _;

/// Floor below which a refinement sequence counts as exact at resolution.
pub const SLOPE_FLOOR: f64 = 3e-13;

#[derive(Debug, Clone, Serialize)]
pub struct SlopeCheck {
    /// Worst measured order across atoms; `None` when every atom sat at the
    /// exactness floor.
    pub observed: Option<f64>,
    pub criterion: String,
    pub exact_atoms: usize,
    pub passed: bool,
}

impl SlopeCheck {
    /// Order must land in `target +- band` on every atom (atoms at the floor pass).
    pub fn band(per_atom_levels: &[Vec<f64>], floor: f64, target: f64, band: f64) -> SlopeCheck {
        Self::build(per_atom_levels, floor, target, band, false)
    }

    /// Order must be at least `min` on every atom (atoms at the floor pass).
    pub fn at_least(per_atom_levels: &[Vec<f64>], floor: f64, min: f64) -> SlopeCheck {
        Self::build(per_atom_levels, floor, min, f64::INFINITY, true)
    }

    fn build(
        per_atom_levels: &[Vec<f64>],
        floor: f64,
        target: f64,
        band: f64,
        one_sided: bool,
    ) -> SlopeCheck {
        let mut worst: Option<f64> = None;
        let mut exact_atoms = 0usize;
        let mut passed = true;
        for levels in per_atom_levels {
            match decay_order(levels, floor) {
                None => exact_atoms += 1,
                Some(order) => {
                    let ok = if one_sided {
                        order >= target
                    } else {
                        (order - target).abs() <= band
                    };
                    passed &= ok;
                    let dist = (order - target).abs();
                    if worst.map_or(true, |w| dist > (w - target).abs()) {
                        worst = Some(order);
                    }
                }
            }
        }
        let criterion = if one_sided {
            format!(">= {target}")
        } else {
            format!("{target} +- {band}")
        };
        SlopeCheck { observed: worst, criterion, exact_atoms, passed }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResidual {
    pub s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    pub per_atom: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub max_residual: f64,
    pub residual_per_atom: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointResidual>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeCheck>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    /// Builds a residual record; `passed` is the tolerance test over every
    /// point and atom (slope checks can be attached afterwards).
    pub fn residual(
        name: impl Into<String>,
        anchor: impl Into<String>,
        tolerance: f64,
        points: Vec<PointResidual>,
    ) -> CheckRecord {
        let n_atoms = points.first().map_or(0, |p| p.per_atom.len());
        let mut per_atom = vec![0.0f64; n_atoms];
        for p in &points {
            for (slot, &r) in per_atom.iter_mut().zip(&p.per_atom) {
                *slot = slot.max(r);
            }
        }
        let max_residual = per_atom.iter().copied().fold(0.0f64, f64::max);
        CheckRecord {
            name: name.into(),
            anchor: anchor.into(),
            probe: None,
            tolerance: Some(tolerance),
            max_residual,
            residual_per_atom: per_atom,
            points,
            slope: None,
            passed: max_residual <= tolerance,
            note: None,
        }
    }

    /// A record whose pass/fail is carried by its slope or note alone.
    pub fn informational(
        name: impl Into<String>,
        anchor: impl Into<String>,
        per_atom: Vec<f64>,
    ) -> CheckRecord {
        let max_residual = per_atom.iter().copied().fold(0.0f64, f64::max);
        CheckRecord {
            name: name.into(),
            anchor: anchor.into(),
            probe: None,
            tolerance: None,
            max_residual,
            residual_per_atom: per_atom,
            points: Vec::new(),
            slope: None,
            passed: true,
            note: None,
        }
    }

    pub fn with_probe(mut self, probe: impl Into<String>) -> CheckRecord {
        self.probe = Some(probe.into());
        self
    }

    pub fn with_slope(mut self, slope: SlopeCheck) -> CheckRecord {
        self.passed &= slope.passed;
        self.slope = Some(slope);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> CheckRecord {
        self.note = Some(note.into());
        self
    }

    pub fn with_passed(mut self, passed: bool) -> CheckRecord {
        self.passed = passed;
        self
    }
}

/// Per-atom residual snapshot from an `RScalar`.
pub fn residual_point(s: f64, r: &RScalar) -> PointResidual {
    PointResidual { s, u: None, per_atom: r.values().to_vec() }
}

pub fn residual_point2(s: f64, u: f64, r: &RScalar) -> PointResidual {
    PointResidual { s, u: Some(u), per_atom: r.values().to_vec() }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub label: String,
    pub atoms: Vec<String>,
    pub records: Vec<CheckRecord>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn new(label: impl Into<String>, atoms: Vec<String>) -> SuiteReport {
        SuiteReport { label: label.into(), atoms, records: Vec::new(), passed: true }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.passed &= record.passed;
        self.records.push(record);
    }

    pub fn extend(&mut self, other: SuiteReport) {
        for rec in other.records {
            self.push(rec);
        }
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// Canonical JSON: pretty-printed, trailing newline, no volatile fields.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width summary table, one line per record.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let name_w = self
            .records
            .iter()
            .map(|r| r.name.len() + r.probe.as_ref().map_or(0, |p| p.len() + 3))
            .chain([5])
            .max()
            .unwrap();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>12}  {:>9}  {:>12}  {}",
            "check", "residual", "tol", "slope", "status"
        );
        let _ = writeln!(out, "{}", "-".repeat(name_w + 12 + 9 + 12 + 14));
        for r in &self.records {
            let name = match &r.probe {
                Some(p) => format!("{} [{p}]", r.name),
                None => r.name.clone(),
            };
            let tol = r.tolerance.map_or("-".to_string(), |t| format!("{t:.1e}"));
            let slope = r
                .slope
                .as_ref()
                .map_or("-".to_string(), |s| match s.observed {
                    Some(o) => format!("{o:.2}"),
                    None => "exact".to_string(),
                });
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>12.4e}  {:>9}  {:>12}  {}",
                name,
                r.max_residual,
                tol,
                slope,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "{} checks, overall: {}",
            self.records.len(),
            if self.passed { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Convergence table: one row per refinement level, one residual column per
/// atom, and a final observed-order row.
pub fn convergence_csv(levels: &[usize], per_level: &[Vec<f64>], atoms: &[String]) -> String {
    let mut out = String::new();
    let _ = write!(out, "level");
    for a in atoms {
        let _ = write!(out, ",{a}");
    }
    let _ = writeln!(out);
    for (lvl, row) in levels.iter().zip(per_level) {
        let _ = write!(out, "{lvl}");
        for v in row {
            let _ = write!(out, ",{v:e}");
        }
        let _ = writeln!(out);
    }
    let _ = write!(out, "order");
    for atom in 0..atoms.len() {
        let seq: Vec<f64> = per_level.iter().map(|row| row[atom]).collect();
        match decay_order(&seq, SLOPE_FLOOR) {
            Some(o) => {
                let _ = write!(out, ",{o:.3}");
            }
            None => {
                let _ = write!(out, ",exact");
            }
        }
    }
    let _ = writeln!(out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residual_record_aggregates_max() {
        let rec = CheckRecord::residual(
            "law",
            "anchor",
            1e-10,
            vec![
                PointResidual { s: 0.5, u: None, per_atom: vec![1e-12, 3e-11] },
                PointResidual { s: 1.0, u: None, per_atom: vec![2e-12, 1e-12] },
            ],
        );
        assert_eq!(rec.residual_per_atom, vec![2e-12, 3e-11]);
        assert!(rec.passed);
        assert_eq!(rec.max_residual, 3e-11);
    }

    #[test]
    fn slope_band_flags_out_of_band_atom() {
        let good: Vec<f64> = (0..6).map(|k| 2f64.powi(-k)).collect();
        let bad: Vec<f64> = (0..6).map(|k| 8f64.powi(-k)).collect();
        let s = SlopeCheck::band(&[good.clone(), bad], SLOPE_FLOOR, 1.0, 0.3);
        assert!(!s.passed);
        let s2 = SlopeCheck::band(&[good], SLOPE_FLOOR, 1.0, 0.3);
        assert!(s2.passed);
    }

    #[test]
    fn slope_exact_floor_passes() {
        let flat = vec![vec![0.0; 6]];
        let s = SlopeCheck::band(&flat, SLOPE_FLOOR, 1.0, 0.3);
        assert!(s.passed);
        assert_eq!(s.exact_atoms, 1);
        assert!(s.observed.is_none());
    }

    #[test]
    fn report_json_is_stable() {
        let mut rep = SuiteReport::new("demo", vec!["w".into()]);
        rep.push(CheckRecord::residual(
            "c1",
            "a1",
            1e-8,
            vec![PointResidual { s: 1.0, u: None, per_atom: vec![1e-9] }],
        ));
        assert_eq!(rep.to_json(), rep.to_json());
        assert!(rep.to_text_table().contains("PASS"));
    }

    #[test]
    fn convergence_csv_has_order_row() {
        let csv = convergence_csv(
            &[32, 64, 128],
            &[vec![1e-4], vec![6.25e-6], vec![3.90625e-7]],
            &["w".to_string()],
        );
        assert!(csv.lines().last().unwrap().starts_with("order,4.0"));
    }
}
