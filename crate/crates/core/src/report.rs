//! Named residuals with tolerance verdicts.

use rug::Float;
use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use crate::num;

/// Significant digits used when residuals are rendered as strings.
pub const REPORT_DIGITS: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped(String),
}

/// One identity's residual.
///
/// `relative = absolute / max(1, scale)` where `scale` is the largest magnitude
/// among the terms of the identity. With an `uncertainty` (empirical error bar)
/// the verdict is `absolute <= uncertainty` instead of the tolerance test.
#[derive(Clone, Debug)]
pub struct Residual {
    pub absolute: Float,
    pub relative: Float,
    pub tolerance: f64,
    pub uncertainty: Option<Float>,
    pub verdict: Verdict,
    pub note: Option<String>,
    /// A separation margin (must exceed `tolerance`) rather than a residual.
    pub margin: bool,
}

impl Residual {
    pub fn passed(&self) -> bool {
        !matches!(self.verdict, Verdict::Fail)
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.verdict, Verdict::Skipped(_))
    }

    pub fn relative_f64(&self) -> f64 {
        self.relative.to_f64()
    }

    pub fn absolute_f64(&self) -> f64 {
        self.absolute.to_f64()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ResidualReport {
    entries: Vec<(String, Residual)>,
}

impl ResidualReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `|residual|` judged against `tol` relative to `max(1, scale)`.
    pub fn record(&mut self, name: impl Into<String>, residual: &Float, scale: &Float, tol: f64) {
        let prec = residual.prec();
        let absolute = Float::with_val(prec, residual.abs_ref());
        let denom = Float::with_val(prec, scale.abs_ref()).max(&num::one(prec));
        let relative = Float::with_val(prec, &absolute / &denom);
        let verdict = if relative.is_finite() && relative <= tol { Verdict::Pass } else { Verdict::Fail };
        self.insert(name.into(), Residual { absolute, relative, tolerance: tol, uncertainty: None, verdict, note: None, margin: false });
    }

    /// Records `lhs - rhs` where the identity's terms are given; the scale is the
    /// largest term magnitude.
    pub fn record_terms(&mut self, name: impl Into<String>, terms: &[Float], tol: f64) {
        let prec = terms.first().map(|t| t.prec()).unwrap_or(64);
        let sum = num::sum(prec, terms);
        let scale = num::max_abs(prec, terms);
        self.record(name, &sum, &scale, tol);
    }

    /// Records `lhs - rhs` with the scale taken from both sides.
    pub fn record_pair(&mut self, name: impl Into<String>, lhs: &Float, rhs: &Float, tol: f64) {
        let prec = lhs.prec().max(rhs.prec());
        let diff = Float::with_val(prec, lhs - rhs);
        let scale = num::max_abs(prec, [lhs, rhs]);
        self.record(name, &diff, &scale, tol);
    }

    /// Records a residual whose acceptance bound is an empirical error bar.
    pub fn record_with_uncertainty(&mut self, name: impl Into<String>, residual: &Float, uncertainty: &Float) {
        let prec = residual.prec();
        let absolute = Float::with_val(prec, residual.abs_ref());
        let unc = Float::with_val(prec, uncertainty.abs_ref());
        let verdict = if absolute.is_finite() && absolute <= unc { Verdict::Pass } else { Verdict::Fail };
        self.insert(
            name.into(),
            Residual {
                relative: absolute.clone(),
                absolute,
                tolerance: f64::NAN,
                uncertainty: Some(unc),
                verdict,
                note: Some("empirical tolerance: propagated extrapolation error".into()),
                margin: false,
            },
        );
    }

    /// Records a quantity that must exceed `threshold` (a separation margin, e.g.
    /// how badly a wrong branch fails). `relative` holds `threshold / value`.
    pub fn record_exceeds(&mut self, name: impl Into<String>, value: &Float, threshold: f64) {
        let prec = value.prec();
        let absolute = Float::with_val(prec, value.abs_ref());
        let relative = Float::with_val(prec, threshold / &absolute);
        let verdict = if absolute.is_finite() && absolute > threshold { Verdict::Pass } else { Verdict::Fail };
        self.insert(
            name.into(),
            Residual {
                absolute,
                relative,
                tolerance: threshold,
                uncertainty: None,
                verdict,
                note: Some("margin: must exceed tolerance".into()),
                margin: true,
            },
        );
    }

    pub fn skip(&mut self, name: impl Into<String>, reason: impl Into<String>) {
        self.insert(
            name.into(),
            Residual {
                absolute: num::zero(64),
                relative: num::zero(64),
                tolerance: f64::NAN,
                uncertainty: None,
                verdict: Verdict::Skipped(reason.into()),
                note: None,
                margin: false,
            },
        );
    }

    /// Attaches a note to an existing entry.
    pub fn annotate(&mut self, name: &str, note: impl Into<String>) {
        if let Some((_, r)) = self.entries.iter_mut().find(|(n, _)| n == name) {
            r.note = Some(note.into());
        }
    }

    /// Adds every entry of `other` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: ResidualReport) {
        for (name, r) in other.entries {
            let key = if prefix.is_empty() { name } else { format!("{prefix}{name}") };
            self.insert(key, r);
        }
    }

    /// Keeps only the entries whose name satisfies `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.entries.retain(|(n, _)| keep(n));
    }

    /// Merges `other` keeping, per name, the worse of the two entries.
    pub fn merge_worst(&mut self, other: ResidualReport) {
        for (name, r) in other.entries {
            match self.entries.iter_mut().find(|(n, _)| *n == name) {
                Some((_, mine)) => {
                    if worse(&r, mine) {
                        *mine = r;
                    }
                }
                None => self.entries.push((name, r)),
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Residual> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Residual)> {
        self.entries.iter().map(|(n, r)| (n.as_str(), r))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|(_, r)| r.passed())
    }

    pub fn failures(&self) -> Vec<&str> {
        self.entries.iter().filter(|(_, r)| !r.passed()).map(|(n, _)| n.as_str()).collect()
    }

    /// Largest relative residual among tolerance-judged entries (skipped
    /// entries, margins and error-bar entries excluded).
    pub fn worst_relative(&self) -> f64 {
        self.entries
            .iter()
            .filter(|(_, r)| !r.is_skipped() && !r.margin && r.uncertainty.is_none())
            .map(|(_, r)| r.relative_f64())
            .fold(0.0, f64::max)
    }

    fn insert(&mut self, name: String, r: Residual) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, slot)) => *slot = r,
            None => self.entries.push((name, r)),
        }
    }
}

fn worse(a: &Residual, b: &Residual) -> bool {
    match (a.passed(), b.passed()) {
        (false, true) => true,
        (true, false) => false,
        _ => a.relative > b.relative || (b.is_skipped() && !a.is_skipped()),
    }
}

impl Serialize for Residual {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Residual", 6)?;
        st.serialize_field("absolute", &num::to_decimal_digits(&self.absolute, REPORT_DIGITS))?;
        st.serialize_field("relative", &num::to_decimal_digits(&self.relative, REPORT_DIGITS))?;
        st.serialize_field("pass", &self.passed())?;
        if self.tolerance.is_finite() {
            st.serialize_field("tolerance", &format!("{:e}", self.tolerance))?;
        }
        if let Some(u) = &self.uncertainty {
            st.serialize_field("uncertainty", &num::to_decimal_digits(u, REPORT_DIGITS))?;
        }
        if let Verdict::Skipped(reason) = &self.verdict {
            st.serialize_field("skipped", reason)?;
        }
        if let Some(note) = &self.note {
            st.serialize_field("note", note)?;
        }
        st.end()
    }
}

impl Serialize for ResidualReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.entries.len()))?;
        for (name, r) in &self.entries {
            map.serialize_entry(name, r)?;
        }
        map.end()
    }
}
