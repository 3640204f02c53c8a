//! Scenario configuration, registries, and the built-in instance battery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghost::{build_family, MixedBagFamily};
use crate::norm::DerivativeBounds;
use crate::potential::PotentialOptions;
use crate::prob::{
    centered_loss, joint_from_kernel, product_measure, DatasetSpace, HypothesisSpace, InstanceSpace,
    JointDistribution, Kernel, LossTable,
};
use crate::sgd::SgdConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    pub count: usize,
    /// One-dimensional embedding of the hypotheses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Tolerance overrides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed negative slack of a bound.
    pub bound: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { bound: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub instances: InstanceConfig,
    pub hypotheses: HypothesisConfig,
    /// `zero-one`, `quadratic:scale` or `cosine:scale`.
    pub loss: String,
    /// `gibbs:beta`, `erm:epsilon` or `constant`.
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sweep: Option<Vec<usize>>,
    /// Divergence registry names; defaults to every applicable certified one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergences: Option<Vec<String>>,
    /// Smoothing scale for `smoothed-kl` when no explicit parameter is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// A configuration file for `run` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub potential: PotentialOptions,
    #[serde(default)]
    pub scenarios: Vec<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdConfig>,
}

fn default_seed() -> u64 {
    7
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    ZeroOne,
    Quadratic(f64),
    Cosine(f64),
}

impl LossKind {
    pub fn parse(name: &str) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let scale = || -> Result<f64> {
            match arg {
                None => Ok(1.0),
                Some(a) => a
                    .parse::<f64>()
                    .map_err(|_| Error::UnknownRegistry(format!("{name}: bad scale"))),
            }
        };
        match head {
            "zero-one" if arg.is_none() => Ok(LossKind::ZeroOne),
            "quadratic" => Ok(LossKind::Quadratic(scale()?)),
            "cosine" => Ok(LossKind::Cosine(scale()?)),
            _ => Err(Error::UnknownRegistry(format!("loss {name}"))),
        }
    }

    pub fn table(&self, hyps: &HypothesisSpace, inst: &InstanceSpace) -> Result<LossTable> {
        let embedded = || -> Result<(Vec<f64>, Vec<f64>)> {
            let x = hyps
                .points_1d()
                .ok_or_else(|| Error::Config("this loss needs a one-dimensional hypothesis embedding".into()))?;
            let v = inst
                .values()
                .ok_or_else(|| Error::Config("this loss needs instance values".into()))?
                .to_vec();
            Ok((x, v))
        };
        match self {
            LossKind::ZeroOne => LossTable::from_fn(hyps.len(), inst.len(), |w, z| if w == z { 0.0 } else { 1.0 }),
            LossKind::Quadratic(s) => {
                let (x, v) = embedded()?;
                LossTable::from_fn(hyps.len(), inst.len(), |w, z| s * (x[w] - v[z]).powi(2))
            }
            LossKind::Cosine(s) => {
                let (x, v) = embedded()?;
                LossTable::from_fn(hyps.len(), inst.len(), |w, z| s * (1.0 + (x[w] - v[z]).cos()))
            }
        }
    }

    /// Derivative bounds of the centered loss `w -> l(w, z) - E l(w, Z)` over
    /// all of `R`, when they are finite.
    pub fn centered_derivative_bounds(&self, inst: &InstanceSpace, z: usize) -> Option<DerivativeBounds> {
        match self {
            LossKind::Cosine(s) => {
                let v = inst.values()?;
                let (mut re, mut im) = (0.0, 0.0);
                for (vz, m) in v.iter().zip(inst.mu()) {
                    re += m * vz.cos();
                    im -= m * vz.sin();
                }
                let (dr, di) = (v[z].cos() - re, -v[z].sin() - im);
                Some(DerivativeBounds::Uniform(s.abs() * (dr * dr + di * di).sqrt()))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmKind {
    /// `kappa(w|s) ∝ exp(-beta sum_i l(w, z_i))`.
    Gibbs(f64),
    /// `(1 - eps)` uniform over empirical minimizers plus `eps` uniform.
    Erm(f64),
    Constant,
}

impl AlgorithmKind {
    pub fn parse(name: &str) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let num = || -> Result<f64> {
            arg.ok_or_else(|| Error::UnknownRegistry(format!("{name}: missing parameter")))?
                .parse::<f64>()
                .map_err(|_| Error::UnknownRegistry(format!("{name}: bad parameter")))
        };
        match head {
            "gibbs" => Ok(AlgorithmKind::Gibbs(num()?)),
            "erm" => {
                let eps = if arg.is_some() { num()? } else { 0.0 };
                if !(0.0..=1.0).contains(&eps) {
                    return Err(Error::Parameter(format!("erm mixing weight must lie in [0, 1], got {eps}")));
                }
                Ok(AlgorithmKind::Erm(eps))
            }
            "constant" if arg.is_none() => Ok(AlgorithmKind::Constant),
            _ => Err(Error::UnknownRegistry(format!("algorithm {name}"))),
        }
    }

    pub fn kernel(&self, loss: &LossTable, datasets: &DatasetSpace) -> Result<Kernel> {
        let nw = loss.n_hyp();
        match *self {
            AlgorithmKind::Gibbs(beta) => Kernel::from_fn(nw, datasets, |t| {
                let risk: Vec<f64> = (0..nw).map(|w| t.iter().map(|&z| loss.get(w, z)).sum()).collect();
                let best = risk.iter().cloned().fold(f64::INFINITY, f64::min);
                let weights: Vec<f64> = risk.iter().map(|r| (-beta * (r - best)).exp()).collect();
                let total: f64 = weights.iter().sum();
                weights.iter().map(|x| x / total).collect()
            }),
            AlgorithmKind::Erm(eps) => Kernel::from_fn(nw, datasets, |t| {
                let risk: Vec<f64> = (0..nw).map(|w| t.iter().map(|&z| loss.get(w, z)).sum()).collect();
                let best = risk.iter().cloned().fold(f64::INFINITY, f64::min);
                let ties = risk.iter().filter(|r| **r <= best + 1e-12).count() as f64;
                risk.iter()
                    .map(|r| {
                        let erm = if *r <= best + 1e-12 { 1.0 / ties } else { 0.0 };
                        (1.0 - eps) * erm + eps / nw as f64
                    })
                    .collect()
            }),
            AlgorithmKind::Constant => Kernel::constant(vec![1.0 / nw as f64; nw], datasets),
        }
    }
}

/// A fully enumerated scenario at one sample size.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub n: usize,
    pub instances: InstanceSpace,
    pub hypotheses: HypothesisSpace,
    pub loss_kind: LossKind,
    pub algorithm: AlgorithmKind,
    pub loss: LossTable,
    pub centered: LossTable,
    pub datasets: DatasetSpace,
    pub kernel: Kernel,
    pub p_n: JointDistribution,
    pub q0: Vec<f64>,
    pub sigma: Option<f64>,
    pub tolerances: Tolerances,
    pub divergences: Option<Vec<String>>,
}

impl ScenarioConfig {
    /// The sample sizes this configuration asks for.
    pub fn sizes(&self) -> Result<Vec<usize>> {
        match (&self.n, &self.n_sweep) {
            (Some(n), None) => Ok(vec![*n]),
            (None, Some(v)) if !v.is_empty() => Ok(v.clone()),
            (None, None) => Err(Error::Config(format!("{}: set n or n_sweep", self.id))),
            _ => Err(Error::Config(format!("{}: set exactly one of n and n_sweep", self.id))),
        }
    }

    pub fn build(&self, n: usize) -> Result<Scenario> {
        let labels = self
            .instances
            .labels
            .clone()
            .unwrap_or_else(|| (0..self.instances.probs.len()).map(|z| format!("z{z}")).collect());
        let mut instances = InstanceSpace::new(labels, self.instances.probs.clone())?;
        if let Some(v) = &self.instances.values {
            instances = instances.with_values(v.clone())?;
        }
        let mut hypotheses = match &self.hypotheses.labels {
            Some(l) => HypothesisSpace::new(l.clone())?,
            None => HypothesisSpace::indexed(self.hypotheses.count)?,
        };
        if hypotheses.len() != self.hypotheses.count {
            return Err(Error::Config(format!("{}: hypothesis labels do not match count", self.id)));
        }
        if let Some(p) = &self.hypotheses.points {
            hypotheses = hypotheses.with_embedding(p.iter().map(|x| vec![*x]).collect())?;
        }
        let loss_kind = LossKind::parse(&self.loss)?;
        let algorithm = AlgorithmKind::parse(&self.algorithm)?;
        let loss = loss_kind.table(&hypotheses, &instances)?;
        let centered = centered_loss(&loss, &instances);
        let datasets = product_measure(&instances, n)?;
        datasets.check_table(hypotheses.len())?;
        let kernel = algorithm.kernel(&loss, &datasets)?;
        let p_n = joint_from_kernel(&kernel, &datasets)?;
        let q0 = p_n.hypothesis_marginal();
        Ok(Scenario {
            id: self.id.clone(),
            n,
            instances,
            hypotheses,
            loss_kind,
            algorithm,
            loss,
            centered,
            datasets,
            kernel,
            p_n,
            q0,
            sigma: self.sigma,
            tolerances: self.tolerances,
            divergences: self.divergences.clone(),
        })
    }
}

impl Scenario {
    pub fn family(&self) -> Result<MixedBagFamily> {
        build_family(&self.kernel, &self.datasets)
    }

    pub fn gen_true(&self) -> f64 {
        crate::prob::generalization_error(&self.p_n, &self.centered, &self.datasets)
    }

    pub fn points_1d(&self) -> Option<Vec<f64>> {
        self.hypotheses.points_1d()
    }

    /// Every divergence this scenario supports with a certificate.
    pub fn default_divergences(&self) -> Vec<String> {
        let mut out: Vec<String> = [
            "kl",
            "chi2",
            "pnorm2:1.25",
            "pnorm2:1.5",
            "pnorm2:2",
            "pnormp:2",
            "pnormp:3",
            "pnormp:4",
            "hellinger",
            "itakura-saito",
            "single-letter:kl",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        if self.points_1d().is_some() && matches!(self.loss_kind, LossKind::Cosine(_)) {
            out.push(format!("smoothed-kl:{}", self.sigma.unwrap_or(0.5)));
            out.push("wasserstein".into());
        }
        out
    }

    pub fn divergence_names(&self) -> Vec<String> {
        self.divergences.clone().unwrap_or_else(|| self.default_divergences())
    }
}

fn grid_instance(probs: &[f64], values: Option<Vec<f64>>) -> InstanceConfig {
    InstanceConfig {
        probs: probs.to_vec(),
        values,
        labels: None,
    }
}

fn config(id: String, inst: InstanceConfig, hyp: HypothesisConfig, loss: &str, algo: String, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        id,
        instances: inst,
        hypotheses: hyp,
        loss: loss.into(),
        algorithm: algo,
        n: Some(n),
        n_sweep: None,
        divergences: None,
        sigma: None,
        tolerances: Tolerances::default(),
    }
}

/// The built-in battery: Gibbs at four temperatures, mixed ERM, constant and
/// deterministic ERM algorithms over four small instance shapes.
pub fn battery() -> Vec<ScenarioConfig> {
    let shapes: Vec<(&str, InstanceConfig, HypothesisConfig, &str, usize)> = vec![
        (
            "binary",
            grid_instance(&[0.5, 0.5], None),
            HypothesisConfig { count: 2, points: None, labels: None },
            "zero-one",
            2,
        ),
        (
            "ternary",
            grid_instance(&[0.5, 0.3, 0.2], None),
            HypothesisConfig { count: 3, points: None, labels: None },
            "zero-one",
            3,
        ),
        (
            "circle",
            grid_instance(&[0.4, 0.35, 0.25], Some(vec![0.0, 2.0, 4.0])),
            HypothesisConfig { count: 3, points: Some(vec![0.0, 1.0, 2.5]), labels: None },
            "cosine:0.5",
            2,
        ),
        (
            "wide",
            grid_instance(&[0.25, 0.25, 0.25, 0.25], None),
            HypothesisConfig { count: 4, points: None, labels: None },
            "zero-one",
            3,
        ),
    ];
    let mut out = Vec::new();
    for beta in [0.5, 1.0, 2.0, 4.0] {
        for (name, inst, hyp, loss, n) in shapes.iter().take(3) {
            out.push(config(format!("gibbs{beta}-{name}"), inst.clone(), hyp.clone(), loss, format!("gibbs:{beta}"), *n));
        }
    }
    for (name, inst, hyp, loss, n) in &shapes[3..] {
        out.push(config(format!("gibbs2-{name}"), inst.clone(), hyp.clone(), loss, "gibbs:2".into(), *n));
        out.push(config(format!("gibbs1-{name}-n4"), inst.clone(), hyp.clone(), loss, "gibbs:1".into(), 4));
    }
    for eps in [0.05, 0.2] {
        for (name, inst, hyp, loss, n) in shapes.iter().take(3) {
            out.push(config(format!("erm{eps}-{name}"), inst.clone(), hyp.clone(), loss, format!("erm:{eps}"), *n));
        }
    }
    for (name, inst, hyp, loss, n) in shapes.iter().take(2) {
        out.push(config(format!("constant-{name}"), inst.clone(), hyp.clone(), loss, "constant".into(), *n));
    }
    for (name, inst, hyp, loss, n) in shapes.iter().take(2) {
        out.push(config(format!("erm-{name}"), inst.clone(), hyp.clone(), loss, "erm:0".into(), *n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_is_large_and_builds() {
        let b = battery();
        assert!(b.len() >= 20);
        for c in &b {
            let s = c.build(c.n.unwrap()).unwrap();
            assert!(s.n <= 4 && s.hypotheses.len() <= 4 && s.instances.len() <= 4);
        }
    }

    #[test]
    fn erm_one_sample_has_gen_minus_half() {
        let c = config(
            "erm".into(),
            grid_instance(&[0.5, 0.5], None),
            HypothesisConfig { count: 2, points: None, labels: None },
            "zero-one",
            "erm:0".into(),
            1,
        );
        let s = c.build(1).unwrap();
        assert!((s.gen_true() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_and_entries_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seed": 1, "typo": 3}"#).is_err());
        assert!(LossKind::parse("hinge").is_err());
        assert!(AlgorithmKind::parse("gibbs").is_err());
        assert!(AlgorithmKind::parse("erm:1.5").is_err());
    }

    #[test]
    fn cosine_derivative_bound_is_the_centered_amplitude() {
        let inst = InstanceSpace::from_probs(vec![0.5, 0.5]).unwrap().with_values(vec![0.0, std::f64::consts::PI]).unwrap();
        // E e^{-iZ} = 0, so the amplitude is the scale itself
        match LossKind::Cosine(0.7).centered_derivative_bounds(&inst, 0).unwrap() {
            DerivativeBounds::Uniform(b) => assert!((b - 0.7).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }
}
