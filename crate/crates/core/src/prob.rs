//! Exact finite probability substrate.
//!
//! Hypotheses are indexed `0..|W|`, instances `0..|Z|`, and datasets
//! `0..|Z|^n` in mixed radix with the first coordinate most significant.
//! Joint tables are dense `(hypothesis, dataset)` matrices; tuples of zero
//! mass stay in the table so that indexing never shifts.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Largest number of dataset tuples that may be enumerated.
pub const MAX_TUPLES: u128 = 1_000_000;
/// Largest `|W| * |Z|^n` joint table.
pub const MAX_TABLE_ENTRIES: u128 = 10_000_000;

/// Drift below which a probability vector is silently renormalized.
const RESCALE_DRIFT: f64 = 1e-9;

/// A real function on `(hypothesis, dataset)`, stored like a joint table.
pub type JointFunction = Array2<f64>;

/// Validate a probability vector, rescaling it when the normalization drift is
/// tiny and rejecting it otherwise.
pub fn normalize(mut v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidDistribution {
            what: what.to_string(),
            reason: "empty".into(),
        });
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::InvalidDistribution {
            what: what.to_string(),
            reason: format!("entry {x} is negative or not finite"),
        });
    }
    let total: f64 = v.iter().sum();
    let drift = (total - 1.0).abs();
    if drift >= RESCALE_DRIFT {
        return Err(Error::InvalidDistribution {
            what: what.to_string(),
            reason: format!("sums to {total}"),
        });
    }
    if drift > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    Ok(v)
}

fn check_distinct(labels: &[String], what: &str) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(Error::Config(format!("duplicate {what} label {l:?}")));
        }
    }
    Ok(())
}

/// The instance space with its data distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpace {
    labels: Vec<String>,
    mu: Vec<f64>,
    /// Numeric value of each instance, needed by embedded losses.
    values: Option<Vec<f64>>,
}

impl InstanceSpace {
    pub fn new(labels: Vec<String>, mu: Vec<f64>) -> Result<Self> {
        if labels.len() != mu.len() {
            return Err(Error::Dimension(format!(
                "{} instance labels but {} probabilities",
                labels.len(),
                mu.len()
            )));
        }
        check_distinct(&labels, "instance")?;
        let mu = normalize(mu, "instance distribution")?;
        Ok(Self {
            labels,
            mu,
            values: None,
        })
    }

    /// Instances labelled `z0, z1, ...` with the given probabilities.
    pub fn from_probs(mu: Vec<f64>) -> Result<Self> {
        let labels = (0..mu.len()).map(|i| format!("z{i}")).collect();
        Self::new(labels, mu)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::from_probs(vec![1.0 / k as f64; k])
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.mu.len() {
            return Err(Error::Dimension(format!(
                "{} instance values for {} instances",
                values.len(),
                self.mu.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("instance values must be finite".into()));
        }
        self.values = Some(values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }
}

/// The hypothesis class, optionally embedded in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSpace {
    labels: Vec<String>,
    embedding: Option<Vec<Vec<f64>>>,
}

impl HypothesisSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("hypothesis space is empty".into()));
        }
        check_distinct(&labels, "hypothesis")?;
        Ok(Self {
            labels,
            embedding: None,
        })
    }

    pub fn indexed(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| format!("w{i}")).collect())
    }

    pub fn with_embedding(mut self, embedding: Vec<Vec<f64>>) -> Result<Self> {
        if embedding.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} embedding vectors for {} hypotheses",
                embedding.len(),
                self.labels.len()
            )));
        }
        let d = embedding.first().map_or(0, Vec::len);
        if d == 0 || embedding.iter().any(|v| v.len() != d) {
            return Err(Error::Dimension(
                "embedding vectors must share a positive dimension".into(),
            ));
        }
        if embedding.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("embedding must be finite".into()));
        }
        self.embedding = Some(embedding);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn embedding(&self) -> Option<&[Vec<f64>]> {
        self.embedding.as_deref()
    }

    pub fn dim(&self) -> Option<usize> {
        self.embedding.as_ref().map(|e| e[0].len())
    }

    /// Coordinates of a one-dimensional embedding.
    pub fn points_1d(&self) -> Option<Vec<f64>> {
        match &self.embedding {
            Some(e) if e[0].len() == 1 => Some(e.iter().map(|v| v[0]).collect()),
            _ => None,
        }
    }
}

/// The product measure `mu^n` over all dataset tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpace {
    radix: usize,
    n: usize,
    mu: Vec<f64>,
    probs: Vec<f64>,
}

/// Enumerate `mu^n`.
pub fn product_measure(mu: &InstanceSpace, n: usize) -> Result<DatasetSpace> {
    if n == 0 {
        return Err(Error::Parameter("sample size n must be at least 1".into()));
    }
    let radix = mu.len();
    let size = (radix as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > MAX_TUPLES {
        return Err(Error::EnumerationLimit {
            what: "dataset tuples |Z|^n",
            size,
            limit: MAX_TUPLES,
        });
    }
    let size = size as usize;
    let mut probs = vec![1.0; size];
    for (idx, p) in probs.iter_mut().enumerate() {
        let mut rest = idx;
        for _ in 0..n {
            *p *= mu.mu()[rest % radix];
            rest /= radix;
        }
    }
    Ok(DatasetSpace {
        radix,
        n,
        mu: mu.mu().to_vec(),
        probs,
    })
}

impl DatasetSpace {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The single-instance law `mu`.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn prob(&self, idx: usize) -> f64 {
        self.probs[idx]
    }

    /// Instance at coordinate `j` (0-based) of dataset `idx`.
    pub fn coord(&self, idx: usize, j: usize) -> usize {
        let shift = self.n - 1 - j;
        (idx / self.radix.pow(shift as u32)) % self.radix
    }

    pub fn decode(&self, idx: usize) -> Vec<usize> {
        (0..self.n).map(|j| self.coord(idx, j)).collect()
    }

    pub fn encode(&self, tuple: &[usize]) -> usize {
        tuple.iter().fold(0, |acc, &z| acc * self.radix + z)
    }

    /// Check the joint-table guard for `n_hyp` hypotheses.
    pub fn check_table(&self, n_hyp: usize) -> Result<()> {
        let size = n_hyp as u128 * self.len() as u128;
        if size > MAX_TABLE_ENTRIES {
            return Err(Error::EnumerationLimit {
                what: "joint table |W|*|Z|^n",
                size,
                limit: MAX_TABLE_ENTRIES,
            });
        }
        Ok(())
    }
}

/// Loss values indexed by `(hypothesis, instance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    values: Array2<f64>,
}

impl LossTable {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("loss table has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn from_fn(n_hyp: usize, n_inst: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n_hyp, n_inst), |(w, z)| f(w, z)))
    }

    pub fn get(&self, w: usize, z: usize) -> f64 {
        self.values[[w, z]]
    }

    pub fn n_hyp(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_inst(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `loss(w, .)` as a vector over instances.
    pub fn row(&self, w: usize) -> Vec<f64> {
        self.values.row(w).to_vec()
    }

    /// `loss(., z)` as a vector over hypotheses.
    pub fn column(&self, z: usize) -> Vec<f64> {
        self.values.column(z).to_vec()
    }
}

/// `l(w, z) - E l(w, Z)`.
pub fn centered_loss(loss: &LossTable, mu: &InstanceSpace) -> LossTable {
    let mut values = loss.values.clone();
    for mut row in values.rows_mut() {
        let mean: f64 = row.iter().zip(mu.mu()).map(|(l, m)| l * m).sum();
        row.iter_mut().for_each(|l| *l -= mean);
    }
    LossTable { values }
}

/// The `i`-th sample loss `(w, s) -> centered(w, s_i)` for `i` in `1..=n`.
pub fn sample_loss(centered: &LossTable, datasets: &DatasetSpace, i: usize) -> Result<JointFunction> {
    if i == 0 || i > datasets.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            max: datasets.n(),
        });
    }
    Ok(Array2::from_shape_fn(
        (centered.n_hyp(), datasets.len()),
        |(w, s)| centered.get(w, datasets.coord(s, i - 1)),
    ))
}

/// `L_i = (1/n) sum_{j <= i} l_j`, with `L_0 = 0`.
pub fn partial_average_loss(
    centered: &LossTable,
    datasets: &DatasetSpace,
    i: usize,
) -> Result<JointFunction> {
    if i > datasets.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            max: datasets.n(),
        });
    }
    let n = datasets.n() as f64;
    Ok(Array2::from_shape_fn(
        (centered.n_hyp(), datasets.len()),
        |(w, s)| {
            let total: f64 = (0..i).map(|j| centered.get(w, datasets.coord(s, j))).sum();
            total / n
        },
    ))
}

/// A learning algorithm: one output distribution per dataset tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    n_hyp: usize,
    rows: Vec<Option<Vec<f64>>>,
}

impl Kernel {
    pub fn from_rows(n_hyp: usize, rows: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(s, row)| {
                row.map(|r| {
                    if r.len() != n_hyp {
                        return Err(Error::Dimension(format!(
                            "kernel row {s} has {} entries, expected {n_hyp}",
                            r.len()
                        )));
                    }
                    normalize(r, &format!("kernel row {s}"))
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_hyp, rows })
    }

    /// Build a kernel by evaluating `f` on every dataset tuple.
    pub fn from_fn(
        n_hyp: usize,
        datasets: &DatasetSpace,
        f: impl Fn(&[usize]) -> Vec<f64>,
    ) -> Result<Self> {
        datasets.check_table(n_hyp)?;
        let rows = (0..datasets.len())
            .map(|s| Some(f(&datasets.decode(s))))
            .collect();
        Self::from_rows(n_hyp, rows)
    }

    /// The data-independent kernel `kappa(.|s) = q`.
    pub fn constant(q: Vec<f64>, datasets: &DatasetSpace) -> Result<Self> {
        let q = normalize(q, "constant kernel")?;
        Ok(Self {
            n_hyp: q.len(),
            rows: vec![Some(q); datasets.len()],
        })
    }

    pub fn n_hyp(&self) -> usize {
        self.n_hyp
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, s: usize) -> Option<&[f64]> {
        self.rows.get(s).and_then(|r| r.as_deref())
    }
}

/// A probability table over `(hypothesis, dataset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    table: Array2<f64>,
}

/// `P(w, s) = mu^n(s) kappa(w|s)`.
pub fn joint_from_kernel(kappa: &Kernel, mu_n: &DatasetSpace) -> Result<JointDistribution> {
    if kappa.len() != mu_n.len() {
        return Err(Error::Dimension(format!(
            "kernel has {} rows but there are {} datasets",
            kappa.len(),
            mu_n.len()
        )));
    }
    mu_n.check_table(kappa.n_hyp())?;
    let mut table = Array2::zeros((kappa.n_hyp(), mu_n.len()));
    for s in 0..mu_n.len() {
        let ps = mu_n.prob(s);
        if ps == 0.0 {
            continue;
        }
        let row = kappa.row(s).ok_or(Error::IncompleteKernel(s))?;
        for (w, k) in row.iter().enumerate() {
            table[[w, s]] = ps * k;
        }
    }
    Ok(JointDistribution { table })
}

impl JointDistribution {
    pub fn from_table(table: Array2<f64>) -> Result<Self> {
        let flat = normalize(table.iter().copied().collect(), "joint distribution")?;
        let table = Array2::from_shape_vec(table.raw_dim(), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(Self { table })
    }

    pub(crate) fn from_table_unchecked(table: Array2<f64>) -> Self {
        Self { table }
    }

    /// `q (x) mu^n`.
    pub fn product(q: &[f64], mu_n: &DatasetSpace) -> Self {
        let table = Array2::from_shape_fn((q.len(), mu_n.len()), |(w, s)| q[w] * mu_n.prob(s));
        Self { table }
    }

    /// Mixture `sum_k weights[k] * members[k]`; weights are not validated.
    pub(crate) fn combination(weights: &[f64], members: &[JointDistribution]) -> Self {
        let mut table = Array2::zeros(members[0].table.raw_dim());
        for (a, m) in weights.iter().zip(members) {
            if *a != 0.0 {
                table.scaled_add(*a, &m.table);
            }
        }
        Self { table }
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.table
    }

    pub fn n_hyp(&self) -> usize {
        self.table.nrows()
    }

    pub fn n_datasets(&self) -> usize {
        self.table.ncols()
    }

    pub fn hypothesis_marginal(&self) -> Vec<f64> {
        self.table.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn dataset_marginal(&self) -> Vec<f64> {
        self.table.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Largest per-tuple deviation of the dataset marginal from `mu^n`.
    pub fn marginal_deviation(&self, mu_n: &DatasetSpace) -> f64 {
        self.dataset_marginal()
            .iter()
            .zip(mu_n.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `P_{|s}`, the conditional law of the hypothesis given dataset `s`.
    pub fn conditional(&self, s: usize) -> Result<Vec<f64>> {
        let col = self.table.column(s);
        let mass = col.sum();
        if mass <= 0.0 {
            return Err(Error::UndefinedConditional(s));
        }
        Ok(col.iter().map(|p| p / mass).collect())
    }

    /// `<P, f> = E_P f(W, S)`.
    pub fn pairing(&self, f: &JointFunction) -> f64 {
        self.table
            .iter()
            .zip(f.iter())
            .filter(|(p, _)| **p != 0.0)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, lambda: f64, other: &JointDistribution) -> Self {
        Self {
            table: &self.table * lambda + &other.table * (1.0 - lambda),
        }
    }

    /// `self - other` as a signed table.
    pub fn difference(&self, other: &JointDistribution) -> Array2<f64> {
        &self.table - &other.table
    }
}

/// `E gen = <P_n, L_n>`.
pub fn generalization_error(p_n: &JointDistribution, centered: &LossTable, datasets: &DatasetSpace) -> f64 {
    // partial_average_loss only fails for i > n
    let l_n = partial_average_loss(centered, datasets, datasets.n()).expect("i = n is in range");
    p_n.pairing(&l_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn zero_one(k: usize) -> LossTable {
        LossTable::from_fn(k, k, |w, z| if w == z { 0.0 } else { 1.0 }).unwrap()
    }

    fn erm_kernel(datasets: &DatasetSpace, loss: &LossTable) -> Kernel {
        Kernel::from_fn(loss.n_hyp(), datasets, |tuple| {
            let risks: Vec<f64> = (0..loss.n_hyp())
                .map(|w| tuple.iter().map(|&z| loss.get(w, z)).sum())
                .collect();
            let best = risks.iter().cloned().fold(f64::INFINITY, f64::min);
            let winners = risks.iter().filter(|r| **r == best).count() as f64;
            risks.iter().map(|r| if *r == best { 1.0 / winners } else { 0.0 }).collect()
        })
        .unwrap()
    }

    #[test]
    fn product_measure_examples() {
        let mu = InstanceSpace::uniform(2).unwrap();
        assert_eq!(product_measure(&mu, 1).unwrap().probs(), &[0.5, 0.5]);
        assert!(product_measure(&mu, 2).unwrap().probs().iter().all(|p| *p == 0.25));
        let mu = InstanceSpace::from_probs(vec![0.3, 0.7]).unwrap();
        let d = product_measure(&mu, 2).unwrap();
        close(d.prob(d.encode(&[0, 1])), 0.3 * 0.7, 1e-15);
    }

    #[test]
    fn product_measure_guard_names_size() {
        let mu = InstanceSpace::uniform(10).unwrap();
        match product_measure(&mu, 7) {
            Err(Error::EnumerationLimit { size, .. }) => assert_eq!(size, 10_000_000),
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_radix_roundtrip() {
        let mu = InstanceSpace::uniform(3).unwrap();
        let d = product_measure(&mu, 3).unwrap();
        for s in 0..d.len() {
            assert_eq!(d.encode(&d.decode(s)), s);
        }
        assert_eq!(d.decode(d.encode(&[2, 0, 1])), vec![2, 0, 1]);
    }

    #[test]
    fn normalization_rescales_small_drift_only() {
        let v = normalize(vec![0.5, 0.5 + 1e-11], "v").unwrap();
        close(v.iter().sum(), 1.0, 1e-15);
        assert!(normalize(vec![0.5, 0.6], "v").is_err());
        assert!(normalize(vec![1.5, -0.5], "v").is_err());
    }

    #[test]
    fn constant_kernel_gives_product() {
        let mu = InstanceSpace::uniform(2).unwrap();
        let d = product_measure(&mu, 2).unwrap();
        let q = vec![0.2, 0.8];
        let p = joint_from_kernel(&Kernel::constant(q.clone(), &d).unwrap(), &d).unwrap();
        assert_eq!(p, JointDistribution::product(&q, &d));
        for s in 0..d.len() {
            let c = p.conditional(s).unwrap();
            close(c[0], 0.2, 1e-15);
            close(c[1], 0.8, 1e-15);
        }
    }

    #[test]
    fn erm_joint_and_conditional() {
        let mu = InstanceSpace::uniform(2).unwrap();
        let d = product_measure(&mu, 1).unwrap();
        let loss = zero_one(2);
        let p = joint_from_kernel(&erm_kernel(&d, &loss), &d).unwrap();
        for w in 0..2 {
            for s in 0..2 {
                close(p.table()[[w, s]], if w == s { 0.5 } else { 0.0 }, 0.0);
            }
        }
        assert_eq!(p.conditional(0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn missing_kernel_row_is_reported() {
        let mu = InstanceSpace::uniform(2).unwrap();
        let d = product_measure(&mu, 1).unwrap();
        let k = Kernel::from_rows(2, vec![Some(vec![1.0, 0.0]), None]).unwrap();
        assert_eq!(joint_from_kernel(&k, &d), Err(Error::IncompleteKernel(1)));
    }

    #[test]
    fn zero_mass_conditional_is_an_error() {
        let mu = InstanceSpace::from_probs(vec![1.0, 0.0]).unwrap();
        let d = product_measure(&mu, 1).unwrap();
        let p = JointDistribution::product(&[0.5, 0.5], &d);
        assert_eq!(p.conditional(1), Err(Error::UndefinedConditional(1)));
    }

    #[test]
    fn pairing_basics() {
        let mu = InstanceSpace::uniform(3).unwrap();
        let d = product_measure(&mu, 2).unwrap();
        let p = JointDistribution::product(&[0.1, 0.9], &d);
        close(p.pairing(&Array2::zeros((2, 9))), 0.0, 0.0);
        close(p.pairing(&Array2::ones((2, 9))), 1.0, 1e-15);
        let loss = LossTable::from_fn(2, 3, |w, z| (w + 2 * z) as f64).unwrap();
        let c = centered_loss(&loss, &mu);
        for i in 1..=2 {
            close(p.pairing(&sample_loss(&c, &d, i).unwrap()), 0.0, 1e-15);
        }
    }

    #[test]
    fn centered_loss_examples() {
        let mu = InstanceSpace::uniform(2).unwrap();
        let c = centered_loss(&LossTable::from_fn(2, 2, |_, _| 3.0).unwrap(), &mu);
        assert!(c.values().iter().all(|v| *v == 0.0));
        let c = centered_loss(&zero_one(2), &mu);
        assert_eq!(c.values().as_slice().unwrap(), &[-0.5, 0.5, 0.5, -0.5]);
        assert_eq!(centered_loss(&c, &mu), c);
    }

    #[test]
    fn partial_average_telescopes() {
        let mu = InstanceSpace::from_probs(vec![0.2, 0.3, 0.5]).unwrap();
        let d = product_measure(&mu, 3).unwrap();
        let loss = LossTable::from_fn(2, 3, |w, z| ((w + 1) * (z + 2)) as f64).unwrap();
        let c = centered_loss(&loss, &mu);
        assert!(partial_average_loss(&c, &d, 0).unwrap().iter().all(|v| *v == 0.0));
        for i in 1..=3 {
            let diff = partial_average_loss(&c, &d, i).unwrap() - partial_average_loss(&c, &d, i - 1).unwrap();
            let step = sample_loss(&c, &d, i).unwrap() / 3.0;
            for (a, b) in diff.iter().zip(step.iter()) {
                close(*a, *b, 1e-15);
            }
        }
        let full = partial_average_loss(&c, &d, 3).unwrap();
        let s = d.encode(&[2, 0, 1]);
        close(full[[1, s]], (c.get(1, 2) + c.get(1, 0) + c.get(1, 1)) / 3.0, 1e-15);
        assert!(partial_average_loss(&c, &d, 4).is_err());
    }

    #[test]
    fn erm_generalization_error_by_enumeration() {
        // Brute force over (w, z, z'): gen = E[l(W,Z) - l(W,Z')] for W = ERM(Z).
        let mu = InstanceSpace::uniform(2).unwrap();
        let d = product_measure(&mu, 1).unwrap();
        let loss = zero_one(2);
        let mut brute = 0.0;
        for z in 0..2 {
            let w = z;
            for zp in 0..2 {
                brute += 0.25 * (loss.get(w, z) - loss.get(w, zp));
            }
        }
        let p = joint_from_kernel(&erm_kernel(&d, &loss), &d).unwrap();
        let gen = generalization_error(&p, &centered_loss(&loss, &mu), &d);
        close(brute, -0.5, 1e-15);
        close(gen, brute, 1e-15);
    }

    #[test]
    fn independent_algorithm_has_zero_gen() {
        let mu = InstanceSpace::from_probs(vec![0.25, 0.75]).unwrap();
        let d = product_measure(&mu, 3).unwrap();
        let p = JointDistribution::product(&[0.4, 0.6], &d);
        let c = centered_loss(&zero_one(2), &mu);
        close(generalization_error(&p, &c, &d), 0.0, 1e-15);
    }
}
