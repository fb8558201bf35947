//! Replacement laws and empirical checks of their regularity.
//!
//! A [`DistributionSpec`] is plain data with a JSON form
//! `{"family": ..., "dim": d, "params": {...}}`. [`make_sampler`] validates it
//! and compiles it into a [`Sampler`]. One-dimensional families used with
//! `dim > 1` draw each coordinate independently.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, RngExt};
use rand_distr::{Bernoulli, Cauchy, Distribution, Exp, Normal, Pareto};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::dist_sq;

/// Default digit depth of the Cantor-like law.
pub const DEFAULT_CANTOR_DEPTH: u32 = 30;

fn zero() -> f64 {
    0.0
}
fn one() -> f64 {
    1.0
}
fn cantor_depth() -> u32 {
    DEFAULT_CANTOR_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformParams {
    #[serde(default = "zero")]
    pub low: f64,
    #[serde(default = "one")]
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    #[serde(default = "zero")]
    pub mean: f64,
    #[serde(default = "one")]
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliParams {
    pub p: f64,
}

/// Location/scale pair shared by Cauchy and Laplace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationScale {
    #[serde(default = "zero")]
    pub location: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialParams {
    #[serde(default = "one")]
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoParams {
    #[serde(default = "one")]
    pub scale: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorParams {
    #[serde(default = "cantor_depth")]
    pub depth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteParams {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub components: Vec<DistributionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductParams {
    pub components: Vec<DistributionSpec>,
}

/// Distribution family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum Family {
    UniformCube(UniformParams),
    Gaussian(GaussianParams),
    Bernoulli(BernoulliParams),
    Cauchy(LocationScale),
    Laplace(LocationScale),
    Exponential(ExponentialParams),
    Pareto(ParetoParams),
    CantorLike(CantorParams),
    FiniteDiscrete(DiscreteParams),
    Mixture(MixtureParams),
    ProductOfOneDim(ProductParams),
}

/// Declarative description of the replacement law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct DistributionSpec {
    pub family: Family,
    pub dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    family: String,
    dim: usize,
    #[serde(default)]
    params: Value,
}

impl TryFrom<RawSpec> for DistributionSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> std::result::Result<Self, String> {
        let params = match raw.params {
            Value::Null => Value::Object(Default::default()),
            v => v,
        };
        let tagged = serde_json::json!({ "family": raw.family, "params": params });
        let family: Family =
            serde_json::from_value(tagged).map_err(|e| format!("family {:?}: {e}", raw.family))?;
        Ok(DistributionSpec {
            family,
            dim: raw.dim,
        })
    }
}

impl From<DistributionSpec> for RawSpec {
    fn from(spec: DistributionSpec) -> Self {
        let Value::Object(mut tagged) = serde_json::to_value(&spec.family).expect("family") else {
            unreachable!("adjacently tagged enum serialises to an object")
        };
        let family = match tagged.remove("family") {
            Some(Value::String(s)) => s,
            _ => unreachable!(),
        };
        RawSpec {
            family,
            dim: spec.dim,
            params: tagged.remove("params").unwrap_or(Value::Null),
        }
    }
}

impl DistributionSpec {
    pub fn new(family: Family, dim: usize) -> Self {
        Self { family, dim }
    }

    pub fn uniform_cube(dim: usize) -> Self {
        Self::new(
            Family::UniformCube(UniformParams {
                low: 0.0,
                high: 1.0,
            }),
            dim,
        )
    }

    pub fn gaussian(mean: f64, sd: f64, dim: usize) -> Self {
        Self::new(Family::Gaussian(GaussianParams { mean, sd }), dim)
    }

    pub fn bernoulli(p: f64) -> Self {
        Self::new(Family::Bernoulli(BernoulliParams { p }), 1)
    }

    pub fn cauchy(location: f64, scale: f64) -> Self {
        Self::new(Family::Cauchy(LocationScale { location, scale }), 1)
    }

    pub fn exponential(rate: f64) -> Self {
        Self::new(Family::Exponential(ExponentialParams { rate }), 1)
    }

    pub fn cantor(depth: u32) -> Self {
        Self::new(Family::CantorLike(CantorParams { depth }), 1)
    }

    pub fn point_mass(at: Vec<f64>) -> Self {
        let dim = at.len();
        Self::new(
            Family::FiniteDiscrete(DiscreteParams {
                atoms: vec![at],
                weights: vec![1.0],
            }),
            dim,
        )
    }

    /// Atom values of coordinate 0 when the law is purely atomic.
    pub fn atoms_first_coordinate(&self) -> Option<Vec<f64>> {
        match &self.family {
            Family::Bernoulli(_) => Some(vec![0.0, 1.0]),
            Family::FiniteDiscrete(p) => Some(p.atoms.iter().map(|a| a[0]).collect()),
            Family::Mixture(m) => {
                let mut all = Vec::new();
                for c in &m.components {
                    all.extend(c.atoms_first_coordinate()?);
                }
                Some(all)
            }
            Family::ProductOfOneDim(p) => p.components.first()?.atoms_first_coordinate(),
            _ => None,
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidDistribution(msg.into()))
}

fn check_weights(weights: &[f64], expected: usize) -> Result<()> {
    if weights.len() != expected || weights.is_empty() {
        return invalid(format!("{} weights for {expected} entries", weights.len()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return invalid("weights must be finite and non-negative");
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return invalid(format!("weights sum to {total}, not 1"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Scalar {
    Uniform { low: f64, width: f64 },
    Normal(Normal<f64>),
    Bernoulli(Bernoulli),
    Cauchy(Cauchy<f64>),
    Laplace { location: f64, scale: f64 },
    Exponential(Exp<f64>),
    Pareto(Pareto<f64>),
    Cantor { depth: u32 },
}

impl Scalar {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Scalar::Uniform { low, width } => low + width * rng.random::<f64>(),
            Scalar::Normal(d) => d.sample(rng),
            Scalar::Bernoulli(d) => f64::from(u8::from(d.sample(rng))),
            Scalar::Cauchy(d) => d.sample(rng),
            Scalar::Laplace { location, scale } => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (-2.0 * u.abs()).ln_1p()
            }
            Scalar::Exponential(d) => d.sample(rng),
            Scalar::Pareto(d) => d.sample(rng),
            Scalar::Cantor { depth } => cantor_sample(*depth, rng),
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Iid(Scalar),
    Discrete {
        atoms: Vec<Vec<f64>>,
        pick: WeightedIndex<f64>,
    },
    Mixture {
        components: Vec<Sampler>,
        pick: WeightedIndex<f64>,
    },
    Product(Vec<Sampler>),
}

/// A compiled, immutable sampler for one [`DistributionSpec`].
#[derive(Debug, Clone)]
pub struct Sampler {
    dim: usize,
    kind: Kind,
}

impl Sampler {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one draw into `out`, which must have length `dim`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            Kind::Iid(s) => out.iter_mut().for_each(|c| *c = s.sample(rng)),
            Kind::Discrete { atoms, pick } => out.copy_from_slice(&atoms[pick.sample(rng)]),
            Kind::Mixture { components, pick } => {
                components[pick.sample(rng)].sample_into(rng, out)
            }
            Kind::Product(parts) => {
                for (c, part) in out.iter_mut().zip(parts) {
                    part.sample_into(rng, std::slice::from_mut(c));
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }
}

/// Validates `spec` and compiles it into a sampler.
pub fn make_sampler(spec: &DistributionSpec) -> Result<Sampler> {
    let dim = spec.dim;
    if dim == 0 {
        return invalid("dim must be at least 1");
    }
    let finite = |x: f64, name: &str| {
        if x.is_finite() {
            Ok(())
        } else {
            invalid(format!("{name} must be finite"))
        }
    };
    let positive = |x: f64, name: &str| {
        if x.is_finite() && x > 0.0 {
            Ok(())
        } else {
            invalid(format!("{name} must be positive, got {x}"))
        }
    };
    let iid = |s: Scalar| {
        Ok(Sampler {
            dim,
            kind: Kind::Iid(s),
        })
    };
    match &spec.family {
        Family::UniformCube(p) => {
            finite(p.low, "low")?;
            finite(p.high, "high")?;
            if p.high <= p.low {
                return invalid("high must exceed low");
            }
            iid(Scalar::Uniform {
                low: p.low,
                width: p.high - p.low,
            })
        }
        Family::Gaussian(p) => {
            finite(p.mean, "mean")?;
            positive(p.sd, "sd")?;
            iid(Scalar::Normal(
                Normal::new(p.mean, p.sd).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ))
        }
        Family::Bernoulli(p) => {
            if !(p.p > 0.0 && p.p < 1.0) {
                return invalid(format!("p must lie in (0, 1), got {}", p.p));
            }
            iid(Scalar::Bernoulli(
                Bernoulli::new(p.p).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ))
        }
        Family::Cauchy(p) => {
            finite(p.location, "location")?;
            positive(p.scale, "scale")?;
            iid(Scalar::Cauchy(
                Cauchy::new(p.location, p.scale)
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ))
        }
        Family::Laplace(p) => {
            finite(p.location, "location")?;
            positive(p.scale, "scale")?;
            iid(Scalar::Laplace {
                location: p.location,
                scale: p.scale,
            })
        }
        Family::Exponential(p) => {
            positive(p.rate, "rate")?;
            iid(Scalar::Exponential(
                Exp::new(p.rate).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ))
        }
        Family::Pareto(p) => {
            positive(p.scale, "scale")?;
            positive(p.alpha, "alpha")?;
            iid(Scalar::Pareto(
                Pareto::new(p.scale, p.alpha)
                    .map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ))
        }
        Family::CantorLike(p) => {
            if p.depth == 0 {
                return invalid("depth must be at least 1");
            }
            iid(Scalar::Cantor { depth: p.depth })
        }
        Family::FiniteDiscrete(p) => {
            check_weights(&p.weights, p.atoms.len())?;
            for a in &p.atoms {
                if a.len() != dim {
                    return invalid(format!("atom {a:?} does not have {dim} coordinates"));
                }
                if a.iter().any(|c| !c.is_finite()) {
                    return invalid("atoms must be finite");
                }
            }
            let pick = WeightedIndex::new(&p.weights)
                .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
            Ok(Sampler {
                dim,
                kind: Kind::Discrete {
                    atoms: p.atoms.clone(),
                    pick,
                },
            })
        }
        Family::Mixture(p) => {
            check_weights(&p.weights, p.components.len())?;
            let components = p
                .components
                .iter()
                .map(|c| {
                    if c.dim != dim {
                        invalid(format!(
                            "mixture component has dim {}, expected {dim}",
                            c.dim
                        ))
                    } else {
                        make_sampler(c)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let pick = WeightedIndex::new(&p.weights)
                .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
            Ok(Sampler {
                dim,
                kind: Kind::Mixture { components, pick },
            })
        }
        Family::ProductOfOneDim(p) => {
            if p.components.len() != dim {
                return invalid(format!(
                    "{} product components for dim {dim}",
                    p.components.len()
                ));
            }
            let parts = p
                .components
                .iter()
                .map(|c| {
                    if c.dim != 1 {
                        invalid("product components must be one-dimensional")
                    } else {
                        make_sampler(c)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Sampler {
                dim,
                kind: Kind::Product(parts),
            })
        }
    }
}

/// `sum_{k=1..depth} b_k * 2 / 3^k` with fair bits `b_k`.
///
/// Up to depth 33 the value is formed as an exact integer over `3^depth`, so
/// the only rounding is the final division.
pub fn cantor_sample<R: Rng + ?Sized>(depth: u32, rng: &mut R) -> f64 {
    if depth <= 33 {
        let mut num: u64 = 0;
        let mut bits = 0u64;
        for k in 0..depth {
            if k % 64 == 0 {
                bits = rng.random();
            }
            num = 3 * num + 2 * (bits & 1);
            bits >>= 1;
        }
        num as f64 / 3f64.powi(depth as i32)
    } else {
        let mut value = 0.0;
        let mut scale = 1.0;
        let mut bits = 0u64;
        for k in 0..depth {
            if k % 64 == 0 {
                bits = rng.random();
            }
            scale /= 3.0;
            if bits & 1 == 1 {
                value += 2.0 * scale;
            }
            bits >>= 1;
        }
        value
    }
}

/// Empirical quartiles of coordinate 0, from a fixed internal stream.
pub fn first_coordinate_quartiles(sampler: &Sampler) -> (f64, f64) {
    const DRAWS: usize = 1 << 14;
    let mut rng = crate::rng::stream(0x6a09_e667_f3bc_c908, 0);
    let mut xs: Vec<f64> = (0..DRAWS).map(|_| sampler.sample(&mut rng)[0]).collect();
    xs.sort_by(f64::total_cmp);
    (xs[DRAWS / 4], xs[3 * DRAWS / 4])
}

/// A ball (an interval when `d = 1`) that probe points must lie in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        dist_sq(x, &self.center).sqrt() <= self.radius
    }
}

/// Monte Carlo tallies for one probe point and radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCount {
    pub probe: Vec<f64>,
    pub r: f64,
    /// Draws in the open ball of radius `r`.
    pub outer_hits: u64,
    /// Draws in the open ball of radius `r * delta`.
    pub inner_hits: u64,
}

impl ConditionalCount {
    pub fn ratio(&self) -> Option<f64> {
        (self.outer_hits > 0).then(|| self.inner_hits as f64 / self.outer_hits as f64)
    }
}

/// Estimated lower bound on `P(zeta in B_{r delta}(x) | zeta in B_r(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub region: Region,
    pub delta: f64,
    pub r_max: f64,
    /// Minimum conditional frequency over pairs with at least one outer hit.
    pub sigma_hat: f64,
    pub n_samples: usize,
    pub conditional_counts: Vec<ConditionalCount>,
    /// Pairs whose conditioning ball received no draws.
    pub empty_pairs: Vec<ConditionalCount>,
}

/// Estimates the regularity constant of `region` at ratio `delta` by direct
/// counting over `n_samples` draws.
pub fn estimate_regularity<R: Rng + ?Sized>(
    sampler: &Sampler,
    region: &Region,
    delta: f64,
    radii: &[f64],
    probes: &[Vec<f64>],
    n_samples: usize,
    rng: &mut R,
) -> Result<RegularityReport> {
    let dim = sampler.dim();
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidRegion(format!(
            "delta {delta} outside (0, 1)"
        )));
    }
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidRegion(
            "radii must be positive and nonempty".into(),
        ));
    }
    if region.center.len() != dim {
        return Err(Error::InvalidRegion("region dimension mismatch".into()));
    }
    if probes.is_empty() {
        return Err(Error::InvalidRegion("no probe points".into()));
    }
    for p in probes {
        if p.len() != dim || !region.contains(p) {
            return Err(Error::InvalidRegion(format!("probe {p:?} outside region")));
        }
    }
    if n_samples < 1000 {
        return Err(Error::InvalidRegion(format!(
            "n_samples = {n_samples} is below 1000"
        )));
    }

    let mut draws = vec![0.0; n_samples * dim];
    for chunk in draws.chunks_exact_mut(dim) {
        sampler.sample_into(rng, chunk);
    }
    let mut counts = Vec::new();
    let mut empty_pairs = Vec::new();
    for probe in probes {
        for &r in radii {
            let (outer, inner) = (r * r, (r * delta) * (r * delta));
            let mut tally = ConditionalCount {
                probe: probe.clone(),
                r,
                outer_hits: 0,
                inner_hits: 0,
            };
            for z in draws.chunks_exact(dim) {
                let s = dist_sq(z, probe);
                if s < outer {
                    tally.outer_hits += 1;
                    if s < inner {
                        tally.inner_hits += 1;
                    }
                }
            }
            if tally.outer_hits == 0 {
                empty_pairs.push(tally);
            } else {
                counts.push(tally);
            }
        }
    }
    let sigma_hat = counts
        .iter()
        .filter_map(ConditionalCount::ratio)
        .fold(f64::INFINITY, f64::min);
    if counts.is_empty() {
        return Err(Error::InsufficientMass);
    }
    Ok(RegularityReport {
        region: region.clone(),
        delta,
        r_max: radii.iter().copied().fold(0.0, f64::max),
        sigma_hat,
        n_samples,
        conditional_counts: counts,
        empty_pairs,
    })
}

/// Counts for one `(a, u)` pair of the tail grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCount {
    pub a: f64,
    pub u: f64,
    /// Draws in the far interval (`(a+u, a+2u]`, or `(a+2u, a+u]` for `u < 0`).
    pub far_hits: u64,
    /// Draws in the near interval (`(a, a+u]`, or `(a+u, a]` for `u < 0`).
    pub near_hits: u64,
}

/// Estimate of the tail-oscillation constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub r_plus: f64,
    pub r_minus: f64,
    /// Largest far/near frequency ratio over the determinate pairs.
    pub c_hat: f64,
    pub grid: Vec<TailCount>,
    /// The pair attaining `c_hat`.
    pub worst_pair: Option<(f64, f64)>,
    /// Pairs with no draws in either interval; consistent with any `C >= 0`.
    pub vacuous: Vec<(f64, f64)>,
    /// Pairs with draws in the far interval but none in the near one.
    pub indeterminate: Vec<(f64, f64)>,
    pub n_samples: usize,
}

/// Estimates `C` in `P(a+u < zeta <= a+2u) <= C P(a < zeta <= a+u)` over a
/// grid of `(a, u)` pairs: right tail for `u > 0, a >= r_plus`, left tail for
/// `u < 0, a <= r_minus`.
pub fn estimate_tail_constant<R: Rng + ?Sized>(
    sampler: &Sampler,
    r_plus: f64,
    r_minus: f64,
    grid: &[(f64, f64)],
    n_samples: usize,
    rng: &mut R,
) -> Result<TailReport> {
    if sampler.dim() != 1 {
        return Err(Error::NotApplicable(
            "tail constant is defined for one-dimensional laws".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidRegion("empty tail grid".into()));
    }
    for &(a, u) in grid {
        let ok = (u > 0.0 && a >= r_plus) || (u < 0.0 && a <= r_minus);
        if !ok || !a.is_finite() || !u.is_finite() {
            return Err(Error::InvalidRegion(format!(
                "grid pair (a = {a}, u = {u}) outside the tail regions"
            )));
        }
    }
    let draws: Vec<f64> = (0..n_samples).map(|_| sampler.sample(rng)[0]).collect();
    let in_half_open =
        |lo: f64, hi: f64| draws.iter().filter(|&&z| lo < z && z <= hi).count() as u64;

    let mut counts = Vec::with_capacity(grid.len());
    let mut vacuous = Vec::new();
    let mut indeterminate = Vec::new();
    let mut c_hat: Option<f64> = None;
    let mut worst_pair = None;
    for &(a, u) in grid {
        let (near, far) = if u > 0.0 {
            (in_half_open(a, a + u), in_half_open(a + u, a + 2.0 * u))
        } else {
            (in_half_open(a + u, a), in_half_open(a + 2.0 * u, a + u))
        };
        counts.push(TailCount {
            a,
            u,
            far_hits: far,
            near_hits: near,
        });
        let ratio = match (near, far) {
            (0, 0) => {
                vacuous.push((a, u));
                0.0
            }
            (0, _) => {
                indeterminate.push((a, u));
                continue;
            }
            (n, f) => f as f64 / n as f64,
        };
        if c_hat.is_none_or(|c| ratio > c) {
            c_hat = Some(ratio);
            worst_pair = Some((a, u));
        }
    }
    let c_hat = c_hat.ok_or(Error::InsufficientTailMass)?;
    Ok(TailReport {
        r_plus,
        r_minus,
        c_hat,
        grid: counts,
        worst_pair,
        vacuous,
        indeterminate,
        n_samples,
    })
}
