//! Anomaly criteria: anomalous trajectories from regression uncertainty,
//! unusual turns from the heading span of a window, and AIS on-off switching
//! from reporting gaps, plus uncertainty-based rejection for classifiers.

use crate::evidential::{dirichlet_probs, dirichlet_uncertainty, nig_uncertainties, DirichletParams};
use crate::neural::{Regressor, WeightStore};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncertaintyKind {
    /// Evidential regressor: epistemic variance β/(v(α-1)).
    #[default]
    Epistemic,
    /// MC-dropout regressor: mean predicted σ² across passes.
    Aleatoric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionThresholds {
    pub theta_at: f64,
    /// Degrees.
    pub theta_ut: f64,
    /// Seconds.
    pub theta_oos: f64,
    pub u_th: f64,
    /// Output-feature indices used by the AT criterion (0 = lon, 1 = lat).
    pub at_features: Vec<usize>,
    pub uncertainty_kind: UncertaintyKind,
    /// Windows per AT chunk, N.
    pub segment_len: usize,
    /// Distance between chunk starts; `None` means back-to-back chunks.
    pub stride: Option<usize>,
}

impl Default for DetectionThresholds {
    fn default() -> Self {
        Self {
            theta_at: 0.4,
            theta_ut: 30.0,
            theta_oos: 180.0,
            u_th: 0.4,
            at_features: vec![0, 1],
            uncertainty_kind: UncertaintyKind::Epistemic,
            segment_len: 30,
            stride: None,
        }
    }
}

impl DetectionThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_at > 0.0 && self.theta_at <= 1.0) {
            return Err(Error::Config(format!("theta_at={} must lie in (0, 1]", self.theta_at)));
        }
        if self.segment_len < 2 {
            return Err(Error::Config(format!("segment length N={} must be at least 2", self.segment_len)));
        }
        if self.at_features.is_empty() {
            return Err(Error::Config("no features selected for the AT criterion".into()));
        }
        if self.stride == Some(0) {
            return Err(Error::Config("stride must be positive".into()));
        }
        if !(self.theta_ut >= 0.0) || !(self.theta_oos >= 0.0) || !(0.0..=1.0).contains(&self.u_th) {
            return Err(Error::Config(format!(
                "invalid thresholds: theta_ut={}, theta_oos={}, u_th={}",
                self.theta_ut, self.theta_oos, self.u_th
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtVerdict {
    /// Index of the first window of this chunk within its segment.
    pub start: usize,
    /// `[feature][window]`, each row divided by its maximum.
    pub normalized: Vec<Vec<f64>>,
    pub min_normalized: f64,
    pub theta_at: f64,
    pub anomalous: bool,
}

/// Flags a chunk whose smallest normalized uncertainty falls below Θ_AT.
///
/// `uncertainties` is `[window][feature]` over all output features; only the
/// features listed in `th.at_features` take part.
pub fn detect_at(uncertainties: &[Vec<f64>], th: &DetectionThresholds) -> Result<AtVerdict> {
    if uncertainties.len() < 2 {
        return Err(Error::Config(format!("need at least 2 windows, got {}", uncertainties.len())));
    }
    let mut normalized = Vec::with_capacity(th.at_features.len());
    for &d in &th.at_features {
        let column: Vec<f64> = uncertainties
            .iter()
            .map(|row| {
                row.get(d)
                    .copied()
                    .ok_or_else(|| Error::Shape(format!("feature {d} missing from a window with {} values", row.len())))
            })
            .collect::<Result<_>>()?;
        if let Some(bad) = column.iter().find(|&&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::Numeric(format!("uncertainty {bad} of feature {d} is not positive")));
        }
        let max = column.iter().copied().fold(f64::MIN, f64::max);
        normalized.push(column.iter().map(|u| u / max).collect::<Vec<f64>>());
    }
    let min_normalized = normalized
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(f64::INFINITY, f64::min);
    Ok(AtVerdict {
        start: 0,
        normalized,
        min_normalized,
        theta_at: th.theta_at,
        anomalous: min_normalized < th.theta_at,
    })
}

/// Window start indices of every full chunk. A chunk spans `n + t_in - 1`
/// points, i.e. `n` windows; a shorter tail is dropped.
pub fn chunk_starts(n_windows: usize, th: &DetectionThresholds) -> Vec<usize> {
    let n = th.segment_len;
    let stride = th.stride.unwrap_or(n);
    if n_windows < n {
        return Vec::new();
    }
    (0..=n_windows - n).step_by(stride).collect()
}

/// Runs [`detect_at`] over consecutive chunks of a segment given the
/// uncertainty of every sliding window (`[window][feature]`).
pub fn scan_track_at(window_uncertainties: &[Vec<f64>], th: &DetectionThresholds) -> Result<Vec<AtVerdict>> {
    th.validate()?;
    chunk_starts(window_uncertainties.len(), th)
        .into_iter()
        .map(|s| {
            let mut v = detect_at(&window_uncertainties[s..s + th.segment_len], th)?;
            v.start = s;
            Ok(v)
        })
        .collect()
}

/// Per-window, per-feature uncertainty from a trained regressor. Evidential
/// heads give epistemic or aleatoric variance directly; Gaussian heads run
/// `mc_passes` dropout passes (epistemic = spread of means, aleatoric = mean
/// σ²). Multi-step outputs use the first predicted step.
pub fn window_uncertainties(
    model: &Regressor,
    w: &WeightStore,
    windows: &[Vec<f64>],
    kind: UncertaintyKind,
    mc_passes: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    use crate::neural::RegressorHead;
    windows
        .iter()
        .enumerate()
        .map(|(i, x)| match model.spec().head {
            RegressorHead::Evidential => Ok(model.forward_nig(w, x, None)?[0]
                .iter()
                .map(|p| {
                    let u = nig_uncertainties(p);
                    match kind {
                        UncertaintyKind::Epistemic => u.epistemic,
                        UncertaintyKind::Aleatoric => u.aleatoric,
                    }
                })
                .collect()),
            RegressorHead::Gaussian => Ok(model
                .mc_dropout_predict(w, x, mc_passes, seed.wrapping_add(i as u64))?[0]
                .iter()
                .map(|p| match kind {
                    UncertaintyKind::Epistemic => p.epistemic,
                    UncertaintyKind::Aleatoric => p.aleatoric,
                })
                .collect()),
        })
        .collect()
}

/// Heading span of a window in degrees. When the window holds headings on
/// both sides of north (some ≥ 270°, some ≤ 90°) the two groups are measured
/// separately and added, so a crossing of 0° is not read as a 360° sweep.
pub fn turn_angle(cogs: &[f64]) -> Result<f64> {
    if cogs.is_empty() {
        return Err(Error::Config("turn angle of an empty window".into()));
    }
    let span = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let has_m = cogs.iter().any(|&c| c >= 270.0);
    let has_l = cogs.iter().any(|&c| c <= 90.0);
    if has_m && has_l {
        Ok(span(&mut cogs.iter().copied().filter(|&c| c >= 270.0)) + span(&mut cogs.iter().copied().filter(|&c| c <= 90.0)))
    } else {
        Ok(span(&mut cogs.iter().copied()))
    }
}

/// Maximal runs of anomalous windows as inclusive index intervals.
pub fn merge_ut_runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, flags.len() - 1));
    }
    runs
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassVerdict {
    pub class: usize,
    pub probs: Vec<f64>,
    pub u: f64,
    pub u_th: f64,
    pub accepted: bool,
}

/// Most probable class, accepted only when the Dirichlet uncertainty K/S is
/// at most `u_th`. Ties go to the lowest class index, which is "normal".
pub fn classify_with_rejection(d: &DirichletParams, u_th: f64) -> ClassVerdict {
    let probs = dirichlet_probs(d);
    let class = probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
    let u = dirichlet_uncertainty(d);
    ClassVerdict {
        class,
        probs,
        u,
        u_th,
        accepted: u <= u_th,
    }
}

/// Whether the reporting gap between two consecutive messages exceeds
/// `theta_oos` seconds.
pub fn label_oos(t0: i64, t1: i64, theta_oos: f64) -> Result<bool> {
    if t1 < t0 {
        return Err(Error::Ordering(format!("pair is not time-ordered: {t0} then {t1}")));
    }
    Ok((t1 - t0) as f64 > theta_oos)
}

/// One classified test sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub truth: usize,
    pub predicted: usize,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub u_th: f64,
    /// Correct and accepted, over all samples.
    pub accuracy_all: f64,
    /// Correct among the accepted samples (1 when nothing is accepted).
    pub accuracy_accepted: f64,
    /// Correct and accepted, over all truly anomalous (class ≠ 0) samples.
    pub accuracy_anomalous: f64,
    pub accepted_fraction: f64,
}

pub fn sweep_point(scores: &[Scored], u_th: f64) -> SweepPoint {
    let n = scores.len().max(1) as f64;
    let accepted: Vec<&Scored> = scores.iter().filter(|s| s.u <= u_th).collect();
    let correct = accepted.iter().filter(|s| s.truth == s.predicted).count() as f64;
    let anomalous = scores.iter().filter(|s| s.truth != 0).count();
    let anomalous_ok = accepted.iter().filter(|s| s.truth != 0 && s.truth == s.predicted).count();
    SweepPoint {
        u_th,
        accuracy_all: correct / n,
        accuracy_accepted: if accepted.is_empty() { 1.0 } else { correct / accepted.len() as f64 },
        accuracy_anomalous: if anomalous == 0 { 1.0 } else { anomalous_ok as f64 / anomalous as f64 },
        accepted_fraction: accepted.len() as f64 / n,
    }
}

/// Confusion counts `[truth][predicted]` over accepted samples.
pub fn confusion_matrix(scores: &[Scored], classes: usize, u_th: f64) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for s in scores.iter().filter(|s| s.u <= u_th) {
        if s.truth < classes && s.predicted < classes {
            m[s.truth][s.predicted] += 1;
        }
    }
    m
}
