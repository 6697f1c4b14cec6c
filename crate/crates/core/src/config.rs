//! Plain-text `key=value` pipeline configuration.
//!
//! One assignment per line, `#` starts a comment. Unknown keys and
//! out-of-range values are rejected when parsed.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::ais::Roi;
use crate::detectors::{DetectionThresholds, UncertaintyKind};
use crate::graph::{AssociationParams, DbscanConfig, GraphParams};
use crate::neural::{EvidenceActivation, RegressorHead, TrainConfig};
use crate::similarity::{Denominator, SimilarityParams};
use crate::{Error, Result};

pub const SEED_ENV: &str = "EDL_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub roi: Roi,
    pub tau: i64,
    pub max_gap: i64,
    pub max_sog: f64,
    pub rdp_eps_gtr: f64,
    pub rdp_eps_gta: f64,
    pub dbscan_eps: f64,
    pub dbscan_nmin: usize,
    pub m_th: f64,
    pub e_th: f64,
    pub d_max: f64,
    pub t: usize,
    pub l: usize,
    pub lambda: f64,
    pub theta_at: f64,
    pub theta_ut: f64,
    pub theta_oos: f64,
    pub u_th: f64,
    pub s_at: f64,
    pub seed: u64,
    pub segment_len: usize,
    pub at_features: Vec<usize>,
    pub uncertainty: UncertaintyKind,
    pub ut_window: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub ut_hidden: Vec<usize>,
    pub oos_hidden: Vec<usize>,
    pub evidence: EvidenceActivation,
    pub head: RegressorHead,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub patience: usize,
    pub mc_passes: usize,
    pub denominator: Denominator,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            roi: Roi::western_baltic(),
            tau: 60,
            max_gap: 3600,
            max_sog: crate::ais::DEFAULT_MAX_SOG,
            rdp_eps_gtr: 1000.0,
            rdp_eps_gta: 500.0,
            dbscan_eps: 20.0,
            dbscan_nmin: 1500,
            m_th: 9.2,
            e_th: 0.3,
            d_max: 7000.0,
            t: 10,
            l: 1,
            lambda: 0.01,
            theta_at: 0.4,
            theta_ut: 30.0,
            theta_oos: 180.0,
            u_th: 0.4,
            s_at: 0.3,
            seed: 0,
            segment_len: 30,
            at_features: vec![0, 1],
            uncertainty: UncertaintyKind::Epistemic,
            ut_window: 60,
            hidden: 128,
            layers: 1,
            dropout: 0.1,
            ut_hidden: vec![128, 128, 128],
            oos_hidden: vec![128],
            evidence: EvidenceActivation::Relu,
            head: RegressorHead::Evidential,
            lr: 1e-3,
            batch: 64,
            epochs: 50,
            patience: 5,
            mc_passes: 50,
            denominator: Denominator::Global,
            input: None,
            output: None,
            graph: None,
            model: None,
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> Error {
    Error::Config(format!("{key}={value}: {why}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "not a valid number"))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn check(ok: bool, key: &str, value: &str, why: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(bad(key, value, why))
    }
}

impl PipelineConfig {
    /// Assigns one key, validating its range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match key {
            "roi" => {
                let c: Vec<f64> = list(key, v)?;
                check(c.len() == 4, key, v, "expected min_lon,min_lat,max_lon,max_lat")?;
                self.roi = Roi::new(c[0], c[1], c[2], c[3]).map_err(|e| bad(key, v, &e.to_string()))?;
            }
            "tau" => {
                self.tau = num(key, v)?;
                check(self.tau > 0, key, v, "must be > 0")?;
            }
            "max_gap" => {
                self.max_gap = num(key, v)?;
                check(self.max_gap > 0, key, v, "must be > 0")?;
            }
            "max_sog" => {
                self.max_sog = num(key, v)?;
                check(pos(self.max_sog), key, v, "must be > 0")?;
            }
            "rdp_eps_gtr" => {
                self.rdp_eps_gtr = num(key, v)?;
                check(self.rdp_eps_gtr >= 0.0, key, v, "must be >= 0")?;
            }
            "rdp_eps_gta" => {
                self.rdp_eps_gta = num(key, v)?;
                check(self.rdp_eps_gta >= 0.0, key, v, "must be >= 0")?;
            }
            "dbscan_eps" => {
                self.dbscan_eps = num(key, v)?;
                check(pos(self.dbscan_eps), key, v, "must be > 0")?;
            }
            "dbscan_nmin" => {
                self.dbscan_nmin = num(key, v)?;
                check(self.dbscan_nmin >= 1, key, v, "must be >= 1")?;
            }
            "m_th" => {
                self.m_th = num(key, v)?;
                check(pos(self.m_th), key, v, "must be > 0")?;
            }
            "e_th" => {
                self.e_th = num(key, v)?;
                check((0.0..1.0).contains(&self.e_th), key, v, "must lie in [0, 1)")?;
            }
            "d_max" => {
                self.d_max = num(key, v)?;
                check(pos(self.d_max), key, v, "must be > 0")?;
            }
            "T" => {
                self.t = num(key, v)?;
                check(self.t >= 1, key, v, "must be >= 1")?;
            }
            "L" => {
                self.l = num(key, v)?;
                check(self.l >= 1, key, v, "must be >= 1")?;
            }
            "lambda" => {
                self.lambda = num(key, v)?;
                check(self.lambda >= 0.0, key, v, "must be >= 0")?;
            }
            "theta_at" => {
                self.theta_at = num(key, v)?;
                check(self.theta_at > 0.0 && self.theta_at <= 1.0, key, v, "must lie in (0, 1]")?;
            }
            "theta_ut" => {
                self.theta_ut = num(key, v)?;
                check(self.theta_ut > 0.0 && self.theta_ut < 360.0, key, v, "must lie in (0, 360)")?;
            }
            "theta_oos" => {
                self.theta_oos = num(key, v)?;
                check(pos(self.theta_oos), key, v, "must be > 0")?;
            }
            "u_th" => {
                self.u_th = num(key, v)?;
                check((0.0..=1.0).contains(&self.u_th), key, v, "must lie in [0, 1]")?;
            }
            "s_at" => {
                self.s_at = num(key, v)?;
                check((0.0..=1.0).contains(&self.s_at), key, v, "must lie in [0, 1]")?;
            }
            "seed" => self.seed = num(key, v)?,
            "segment_len" => {
                self.segment_len = num(key, v)?;
                check(self.segment_len >= 2, key, v, "must be >= 2")?;
            }
            "at_features" => {
                self.at_features = list(key, v)?;
                check(self.at_features.iter().all(|&f| f < 4), key, v, "indices must be < 4")?;
            }
            "uncertainty" => {
                self.uncertainty = match v {
                    "epistemic" => UncertaintyKind::Epistemic,
                    "aleatoric" => UncertaintyKind::Aleatoric,
                    _ => return Err(bad(key, v, "expected epistemic or aleatoric")),
                }
            }
            "ut_window" => {
                self.ut_window = num(key, v)?;
                check(self.ut_window >= 2, key, v, "must be >= 2")?;
            }
            "hidden" => {
                self.hidden = num(key, v)?;
                check(self.hidden >= 1, key, v, "must be >= 1")?;
            }
            "layers" => {
                self.layers = num(key, v)?;
                check(self.layers >= 1, key, v, "must be >= 1")?;
            }
            "dropout" => {
                self.dropout = num(key, v)?;
                check((0.0..1.0).contains(&self.dropout), key, v, "must lie in [0, 1)")?;
            }
            "ut_hidden" | "oos_hidden" => {
                let widths: Vec<usize> = list(key, v)?;
                check(widths.iter().all(|&h| h >= 1), key, v, "widths must be >= 1")?;
                if key == "ut_hidden" {
                    self.ut_hidden = widths;
                } else {
                    self.oos_hidden = widths;
                }
            }
            "evidence" => {
                self.evidence = match v {
                    "relu" => EvidenceActivation::Relu,
                    "softplus" => EvidenceActivation::Softplus,
                    _ => return Err(bad(key, v, "expected relu or softplus")),
                }
            }
            "head" => {
                self.head = match v {
                    "edl" => RegressorHead::Evidential,
                    "mc" => RegressorHead::Gaussian,
                    _ => return Err(bad(key, v, "expected edl or mc")),
                }
            }
            "lr" => {
                self.lr = num(key, v)?;
                check(pos(self.lr), key, v, "must be > 0")?;
            }
            "batch" => {
                self.batch = num(key, v)?;
                check(self.batch >= 1, key, v, "must be >= 1")?;
            }
            "epochs" => {
                self.epochs = num(key, v)?;
                check(self.epochs >= 1, key, v, "must be >= 1")?;
            }
            "patience" => self.patience = num(key, v)?,
            "mc_passes" => {
                self.mc_passes = num(key, v)?;
                check(self.mc_passes >= 2, key, v, "must be >= 2")?;
            }
            "denominator" => {
                self.denominator = match v {
                    "global" => Denominator::Global,
                    "matched" => Denominator::Matched,
                    _ => return Err(bad(key, v, "expected global or matched")),
                }
            }
            "input" => self.input = Some(PathBuf::from(v)),
            "output" => self.output = Some(PathBuf::from(v)),
            "graph" => self.graph = Some(PathBuf::from(v)),
            "model" => self.model = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` assignments from config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies a single `key=value` override.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    /// Every effective setting, one per line; parsing the result reproduces `self`.
    pub fn dump(&self) -> String {
        let r = &self.roi;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("roi", format!("{},{},{},{}", r.min_lon, r.min_lat, r.max_lon, r.max_lat));
        put("tau", self.tau.to_string());
        put("max_gap", self.max_gap.to_string());
        put("max_sog", self.max_sog.to_string());
        put("rdp_eps_gtr", self.rdp_eps_gtr.to_string());
        put("rdp_eps_gta", self.rdp_eps_gta.to_string());
        put("dbscan_eps", self.dbscan_eps.to_string());
        put("dbscan_nmin", self.dbscan_nmin.to_string());
        put("m_th", self.m_th.to_string());
        put("e_th", self.e_th.to_string());
        put("d_max", self.d_max.to_string());
        put("T", self.t.to_string());
        put("L", self.l.to_string());
        put("lambda", self.lambda.to_string());
        put("theta_at", self.theta_at.to_string());
        put("theta_ut", self.theta_ut.to_string());
        put("theta_oos", self.theta_oos.to_string());
        put("u_th", self.u_th.to_string());
        put("s_at", self.s_at.to_string());
        put("seed", self.seed.to_string());
        put("segment_len", self.segment_len.to_string());
        put("at_features", join(&self.at_features));
        put(
            "uncertainty",
            match self.uncertainty {
                UncertaintyKind::Epistemic => "epistemic",
                UncertaintyKind::Aleatoric => "aleatoric",
            }
            .into(),
        );
        put("ut_window", self.ut_window.to_string());
        put("hidden", self.hidden.to_string());
        put("layers", self.layers.to_string());
        put("dropout", self.dropout.to_string());
        put("ut_hidden", join(&self.ut_hidden));
        put("oos_hidden", join(&self.oos_hidden));
        put(
            "evidence",
            match self.evidence {
                EvidenceActivation::Relu => "relu",
                EvidenceActivation::Softplus => "softplus",
            }
            .into(),
        );
        put(
            "head",
            match self.head {
                RegressorHead::Evidential => "edl",
                RegressorHead::Gaussian => "mc",
            }
            .into(),
        );
        put("lr", self.lr.to_string());
        put("batch", self.batch.to_string());
        put("epochs", self.epochs.to_string());
        put("patience", self.patience.to_string());
        put("mc_passes", self.mc_passes.to_string());
        put(
            "denominator",
            match self.denominator {
                Denominator::Global => "global",
                Denominator::Matched => "matched",
            }
            .into(),
        );
        for (k, p) in [("input", &self.input), ("output", &self.output), ("graph", &self.graph), ("model", &self.model)] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        s
    }

    /// Overrides the seed from `EDL_SEED` when it is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not a valid seed")))?;
        }
        Ok(())
    }

    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            rdp_eps: self.rdp_eps_gtr,
            dbscan: DbscanConfig {
                eps: self.dbscan_eps,
                n_min: self.dbscan_nmin,
            },
            m_th: self.m_th,
            e_th: self.e_th,
        }
    }

    pub fn association_params(&self) -> AssociationParams {
        AssociationParams {
            d_max: self.d_max,
            rdp_eps: self.rdp_eps_gta,
        }
    }

    pub fn thresholds(&self) -> DetectionThresholds {
        DetectionThresholds {
            theta_at: self.theta_at,
            theta_ut: self.theta_ut,
            theta_oos: self.theta_oos,
            u_th: self.u_th,
            at_features: self.at_features.clone(),
            uncertainty_kind: self.uncertainty,
            segment_len: self.segment_len,
            stride: None,
        }
    }

    pub fn similarity_params(&self) -> SimilarityParams {
        SimilarityParams {
            rdp_eps: self.rdp_eps_gtr,
            d_max: self.d_max,
            s_at: self.s_at,
            denominator: self.denominator,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            lambda: self.lambda,
            seed: self.seed,
            patience: self.patience,
        }
    }
}
