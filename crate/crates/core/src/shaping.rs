//! Stage one: sample flow sizes and inter-arrival gaps from parametric
//! families, retrying until both empirical histograms sit within a
//! Jensen-Shannon distance threshold of their discretized targets.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Pareto, Uniform, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::analysis::js_distance_unchecked;
use crate::error::{Error, Result};

/// A parametric family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Uniform {
        low: f64,
        high: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Pareto {
        shape: f64,
        scale: f64,
    },
    Weibull {
        shape: f64,
        scale: f64,
    },
    Exponential {
        rate: f64,
    },
    #[serde(rename = "multimodal_mixture", alias = "mixture")]
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    #[serde(flatten)]
    pub family: Family,
}

/// A family plus the range its samples are clamped into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub family: Family,
    pub value_bounds: (f64, f64),
}

fn positive(field: &str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{field}.{name}"), format!("must be positive, got {v}")))
    }
}

impl Family {
    fn validate(&self, field: &str, nested: bool) -> Result<()> {
        match *self {
            Family::Uniform { low, high } => {
                positive(field, "low", low)?;
                if !(high.is_finite() && high >= low) {
                    return Err(Error::config(format!("{field}.high"), "must be >= low"));
                }
            }
            Family::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::config(format!("{field}.mu"), "must be finite"));
                }
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::config(format!("{field}.sigma"), "must be non-negative"));
                }
            }
            Family::Pareto { shape, scale } | Family::Weibull { shape, scale } => {
                positive(field, "shape", shape)?;
                positive(field, "scale", scale)?;
            }
            Family::Exponential { rate } => positive(field, "rate", rate)?,
            Family::Mixture { ref components } => {
                if nested {
                    return Err(Error::config(field, "mixtures cannot be nested"));
                }
                if components.is_empty() {
                    return Err(Error::config(format!("{field}.components"), "must not be empty"));
                }
                let mut total = 0.0;
                for (i, c) in components.iter().enumerate() {
                    let cf = format!("{field}.components[{i}]");
                    positive(&cf, "weight", c.weight)?;
                    c.family.validate(&cf, true)?;
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(
                        format!("{field}.components"),
                        format!("weights sum to {total}, not 1"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Point mass location, if the family is degenerate.
    fn point_mass(&self) -> Option<f64> {
        match *self {
            Family::Uniform { low, high } if low == high => Some(low),
            Family::Lognormal { mu, sigma } if sigma == 0.0 => Some(mu.exp()),
            _ => None,
        }
    }

    /// P(X < x).
    fn cdf_below(&self, x: f64) -> f64 {
        if let Some(c) = self.point_mass() {
            return if x > c { 1.0 } else { 0.0 };
        }
        match *self {
            Family::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    0.5 * erfc(-(x.ln() - mu) / (sigma * std::f64::consts::SQRT_2))
                }
            }
            Family::Pareto { shape, scale } => {
                if x <= scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
            Family::Weibull { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-(x / scale).powf(shape)).exp()
                }
            }
            Family::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-rate * x).exp()
                }
            }
            Family::Mixture { ref components } => components
                .iter()
                .map(|c| c.weight * c.family.cdf_below(x))
                .sum(),
        }
    }

    fn sampler(&self) -> Sampler {
        if let Some(c) = self.point_mass() {
            return Sampler::Constant(c);
        }
        // Parameters were validated, so constructors cannot fail.
        match *self {
            Family::Uniform { low, high } => {
                Sampler::Uniform(Uniform::new_inclusive(low, high).expect("validated"))
            }
            Family::Lognormal { mu, sigma } => {
                Sampler::Lognormal(LogNormal::new(mu, sigma).expect("validated"))
            }
            Family::Pareto { shape, scale } => {
                Sampler::Pareto(Pareto::new(scale, shape).expect("validated"))
            }
            Family::Weibull { shape, scale } => {
                Sampler::Weibull(Weibull::new(scale, shape).expect("validated"))
            }
            Family::Exponential { rate } => Sampler::Exp(Exp::new(rate).expect("validated")),
            Family::Mixture { ref components } => Sampler::Mixture(
                WeightedIndex::new(components.iter().map(|c| c.weight)).expect("validated"),
                components.iter().map(|c| c.family.sampler()).collect(),
            ),
        }
    }
}

enum Sampler {
    Constant(f64),
    Uniform(Uniform<f64>),
    Lognormal(LogNormal<f64>),
    Pareto(Pareto<f64>),
    Weibull(Weibull<f64>),
    Exp(Exp<f64>),
    Mixture(WeightedIndex<f64>, Vec<Sampler>),
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Constant(c) => *c,
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Lognormal(d) => d.sample(rng),
            Sampler::Pareto(d) => d.sample(rng),
            Sampler::Weibull(d) => d.sample(rng),
            Sampler::Exp(d) => d.sample(rng),
            Sampler::Mixture(pick, parts) => parts[pick.sample(rng)].draw(rng),
        }
    }
}

impl DistributionSpec {
    pub fn new(family: Family, min: f64, max: f64) -> Self {
        Self {
            family,
            value_bounds: (min, max),
        }
    }

    /// Validate parameters; `field` prefixes any reported config path.
    pub fn validate(&self, field: &str) -> Result<()> {
        self.family.validate(field, false)?;
        let (lo, hi) = self.value_bounds;
        if !(lo.is_finite() && lo > 0.0) {
            return Err(Error::config(format!("{field}.value_bounds"), "minimum must be positive"));
        }
        if !(hi.is_finite() && hi >= lo) {
            return Err(Error::config(format!("{field}.value_bounds"), "maximum must be >= minimum"));
        }
        Ok(())
    }

    /// Probability mass of the clamped distribution in each log-spaced bin.
    pub fn binned_pmf(&self, num_bins: usize) -> Vec<f64> {
        let edges = log_edges(self.value_bounds, num_bins);
        let n = edges.len() - 1;
        let g = |k: usize| {
            if k == 0 {
                0.0
            } else if k == n {
                1.0
            } else {
                self.family.cdf_below(edges[k])
            }
        };
        (0..n).map(|k| (g(k + 1) - g(k)).max(0.0)).collect()
    }

    /// Mean of the clamped distribution, `min + ∫_min^max P(X > x) dx`.
    pub fn clamped_mean(&self) -> f64 {
        let (lo, hi) = self.value_bounds;
        if hi <= lo {
            return lo;
        }
        // Simpson's rule in log space: ∫ S(e^u) e^u du
        const STEPS: usize = 4096;
        let (a, b) = (lo.ln(), hi.ln());
        let h = (b - a) / STEPS as f64;
        let f = |u: f64| {
            let x = u.exp();
            (1.0 - self.family.cdf_below(x)) * x
        };
        let mut acc = f(a) + f(b);
        for i in 1..STEPS {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        lo + acc * h / 3.0
    }
}

/// `num_bins + 1` logarithmically spaced edges over `bounds`.
///
/// Collapses to a single bin when the bounds coincide.
pub fn log_edges(bounds: (f64, f64), num_bins: usize) -> Vec<f64> {
    let (lo, hi) = bounds;
    if hi <= lo || num_bins <= 1 {
        return vec![lo, hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / num_bins as f64;
    // Edges that are mathematically integers (decades) come back from exp a
    // few ulps off; snap them so integer sizes on an edge go to the upper bin.
    let snap = |e: f64| {
        let r = e.round();
        if (e - r).abs() <= 1e-12 * e {
            r
        } else {
            e
        }
    };
    let mut edges: Vec<f64> = (0..=num_bins).map(|k| snap((a + k as f64 * step).exp())).collect();
    edges[0] = lo;
    edges[num_bins] = hi;
    edges
}

/// Normalized histogram of `values` over log-spaced bins; values outside the
/// bounds land in the end bins.
pub fn log_histogram(values: &[f64], bounds: (f64, f64), num_bins: usize) -> Vec<f64> {
    let edges = log_edges(bounds, num_bins);
    let n = edges.len() - 1;
    let inner = &edges[1..n];
    let mut counts = vec![0usize; n];
    for &v in values {
        counts[inner.partition_point(|&e| e <= v)] += 1;
    }
    let total = values.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

/// Draw `count` i.i.d. values from `spec`, clamped into its bounds.
pub fn sample_distribution<R: Rng + ?Sized>(
    spec: &DistributionSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate("distribution")?;
    if count == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    let sampler = spec.family.sampler();
    let (lo, hi) = spec.value_bounds;
    Ok((0..count).map(|_| sampler.draw(rng).clamp(lo, hi)).collect())
}

/// Distance between the empirical histogram of `values` and the binned target.
pub fn histogram_jsd(spec: &DistributionSpec, values: &[f64], num_bins: usize) -> f64 {
    let target = spec.binned_pmf(num_bins);
    let empirical = log_histogram(values, spec.value_bounds, num_bins);
    js_distance_unchecked(&target, &empirical)
}

/// Stage-one output: per-flow sizes and arrival times.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSet {
    /// Flow sizes in whole information units.
    pub sizes: Vec<u64>,
    /// Non-decreasing arrival times, starting at 0.
    pub arrival_times: Vec<f64>,
    /// Time between the first and last arrival.
    pub duration: f64,
}

impl FlowSet {
    pub fn new(sizes: Vec<u64>, arrival_times: Vec<f64>) -> Result<Self> {
        if sizes.len() != arrival_times.len() {
            return Err(Error::Domain(format!(
                "{} sizes but {} arrival times",
                sizes.len(),
                arrival_times.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Domain("flow sizes must be positive".into()));
        }
        if arrival_times.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Domain("arrival times must be non-decreasing".into()));
        }
        let duration = match (arrival_times.first(), arrival_times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        Ok(Self {
            sizes,
            arrival_times,
            duration,
        })
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn total_size(&self) -> u128 {
        self.sizes.iter().map(|&s| s as u128).sum()
    }
}

fn default_jsd_threshold() -> f64 {
    0.1
}
fn default_max_attempts() -> usize {
    10
}
fn default_num_bins() -> usize {
    50
}

/// Knobs for the shaping retry loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapingParams {
    #[serde(default = "default_jsd_threshold")]
    pub jsd_threshold: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_num_bins")]
    pub num_bins: usize,
}

impl Default for ShapingParams {
    fn default() -> Self {
        Self {
            jsd_threshold: default_jsd_threshold(),
            max_attempts: default_max_attempts(),
            num_bins: default_num_bins(),
        }
    }
}

impl ShapingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.jsd_threshold > 0.0 && self.jsd_threshold <= 1.0) {
            return Err(Error::config("shaping.jsd_threshold", "must lie in (0, 1]"));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("shaping.max_attempts", "must be positive"));
        }
        if self.num_bins == 0 {
            return Err(Error::config("shaping.num_bins", "must be positive"));
        }
        Ok(())
    }
}

/// A shaped flow set plus how it was obtained.
#[derive(Debug, Clone)]
pub struct Shaped {
    pub flows: FlowSet,
    pub attempts: usize,
    pub size_jsd: f64,
    pub iat_jsd: f64,
}

/// Convert a sampled real size into whole information units (at least 1).
pub fn to_info_units(v: f64) -> u64 {
    (v.round() as u64).max(1)
}

/// Sample `count` flows, resampling from scratch until both the size and the
/// inter-arrival histograms are within `params.jsd_threshold` of their targets.
pub fn shape_flow_set<R: Rng + ?Sized>(
    size_spec: &DistributionSpec,
    iat_spec: &DistributionSpec,
    count: usize,
    params: &ShapingParams,
    rng: &mut R,
) -> Result<Shaped> {
    size_spec.validate("size_dist")?;
    iat_spec.validate("iat_dist")?;
    params.validate()?;
    if count < 2 {
        return Err(Error::config("num_flows", "at least two flows are required"));
    }

    let mut best = f64::INFINITY;
    for attempt in 1..=params.max_attempts {
        let sizes: Vec<u64> = sample_distribution(size_spec, count, rng)?
            .into_iter()
            .map(to_info_units)
            .collect();
        let gaps = sample_distribution(iat_spec, count - 1, rng)?;

        let size_values: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        let size_jsd = histogram_jsd(size_spec, &size_values, params.num_bins);
        let iat_jsd = histogram_jsd(iat_spec, &gaps, params.num_bins);
        let worst = size_jsd.max(iat_jsd);
        log::debug!("shaping attempt {attempt}: size JSD {size_jsd:.4}, iat JSD {iat_jsd:.4}");
        if worst <= params.jsd_threshold {
            let mut arrivals = Vec::with_capacity(count);
            let mut t = 0.0;
            arrivals.push(t);
            for g in &gaps {
                t += g;
                arrivals.push(t);
            }
            return Ok(Shaped {
                flows: FlowSet::new(sizes, arrivals)?,
                attempts: attempt,
                size_jsd,
                iat_jsd,
            });
        }
        best = best.min(worst);
    }
    Err(Error::ShapingFailure {
        attempts: params.max_attempts,
        best_jsd: best,
        threshold: params.jsd_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn degenerate_families() {
        let u = DistributionSpec::new(Family::Uniform { low: 1.0, high: 1.0 }, 1.0, 10.0);
        assert!(sample_distribution(&u, 7, &mut rng(0)).unwrap().iter().all(|&v| v == 1.0));
        let ln = DistributionSpec::new(Family::Lognormal { mu: 0.0, sigma: 0.0 }, 0.1, 10.0);
        assert_eq!(sample_distribution(&ln, 5, &mut rng(0)).unwrap(), vec![1.0; 5]);
    }

    #[test]
    fn clamping() {
        let spec = DistributionSpec::new(Family::Exponential { rate: 1.0 }, 0.5, 1.5);
        let v = sample_distribution(&spec, 10_000, &mut rng(3)).unwrap();
        assert!(v.iter().all(|&x| (0.5..=1.5).contains(&x)));
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            DistributionSpec::new(Family::Pareto { shape: 0.0, scale: 1.0 }, 1.0, 2.0),
            DistributionSpec::new(Family::Exponential { rate: 1.0 }, 0.0, 2.0),
            DistributionSpec::new(Family::Uniform { low: 2.0, high: 1.0 }, 1.0, 2.0),
            DistributionSpec::new(
                Family::Mixture {
                    components: vec![MixtureComponent {
                        weight: 0.5,
                        family: Family::Exponential { rate: 1.0 },
                    }],
                },
                1.0,
                2.0,
            ),
        ];
        for spec in &bad {
            assert!(matches!(
                sample_distribution(spec, 1, &mut rng(0)),
                Err(Error::Config { .. })
            ));
        }
    }

    /// ∫ x f(x) dx over [scale, hi] plus hi·P(X > hi) by trapezoid on a fine log grid.
    fn pareto_clamped_mean_oracle(shape: f64, scale: f64, hi: f64) -> f64 {
        let pdf = |x: f64| shape * scale.powf(shape) / x.powf(shape + 1.0);
        let n = 200_000;
        let (a, b) = (scale.ln(), hi.ln());
        let h = (b - a) / n as f64;
        let g = |u: f64| {
            let x = u.exp();
            x * pdf(x) * x
        };
        let mut acc = 0.5 * (g(a) + g(b));
        for i in 1..n {
            acc += g(a + i as f64 * h);
        }
        acc * h + hi * (scale / hi).powf(shape)
    }

    #[test]
    fn pareto_sample_mean() {
        let hi = 1e6;
        let oracle = pareto_clamped_mean_oracle(2.0, 1.0, hi);
        assert_abs_diff_eq!(oracle, 2.0, epsilon = 1e-3);
        let spec = DistributionSpec::new(Family::Pareto { shape: 2.0, scale: 1.0 }, 1.0, hi);
        assert_abs_diff_eq!(spec.clamped_mean(), oracle, epsilon = 1e-3);
        let v = sample_distribution(&spec, 100_000, &mut rng(2024)).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert_abs_diff_eq!(mean, oracle, epsilon = 0.05);
    }

    #[test]
    fn clamped_mean_matches_closed_forms() {
        let exp = DistributionSpec::new(Family::Exponential { rate: 0.5 }, 1e-9, 1e4);
        assert_abs_diff_eq!(exp.clamped_mean(), 2.0, epsilon = 1e-6);
        let ln = DistributionSpec::new(Family::Lognormal { mu: 1.0, sigma: 0.5 }, 1e-6, 1e6);
        assert_abs_diff_eq!(ln.clamped_mean(), (1.0f64 + 0.125).exp(), epsilon = 1e-6);
        let point = DistributionSpec::new(Family::Uniform { low: 3.0, high: 3.0 }, 1.0, 10.0);
        assert_abs_diff_eq!(point.clamped_mean(), 3.0, epsilon = 1e-2);
    }

    #[test]
    fn binned_pmf_sums_to_one() {
        let mix = DistributionSpec::new(
            Family::Mixture {
                components: vec![
                    MixtureComponent {
                        weight: 0.3,
                        family: Family::Lognormal { mu: 2.0, sigma: 0.3 },
                    },
                    MixtureComponent {
                        weight: 0.7,
                        family: Family::Weibull { shape: 1.5, scale: 100.0 },
                    },
                ],
            },
            1.0,
            1e4,
        );
        let pmf = mix.binned_pmf(50);
        assert_eq!(pmf.len(), 50);
        assert_abs_diff_eq!(pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_histogram_end_bins() {
        let h = log_histogram(&[1.0, 20.0, 100.0, 100.0], (1.0, 100.0), 2);
        assert_eq!(h, vec![0.25, 0.75]);
    }

    #[test]
    fn trivial_shaping() {
        let one = DistributionSpec::new(Family::Uniform { low: 1.0, high: 1.0 }, 1.0, 1.0);
        let shaped = shape_flow_set(&one, &one, 4, &ShapingParams::default(), &mut rng(9)).unwrap();
        assert_eq!(shaped.flows.sizes, vec![1, 1, 1, 1]);
        assert_eq!(shaped.flows.arrival_times, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(shaped.flows.duration, 3.0);
        assert_eq!(shaped.attempts, 1);
    }

    fn lognormal_sizes() -> DistributionSpec {
        DistributionSpec::new(Family::Lognormal { mu: 7.0, sigma: 1.0 }, 1.0, 1e6)
    }

    fn lognormal_gaps() -> DistributionSpec {
        DistributionSpec::new(Family::Lognormal { mu: 0.0, sigma: 1.0 }, 1e-3, 1e3)
    }

    #[test]
    fn matched_spec_passes_first_attempt() {
        let params = ShapingParams::default();
        let shaped = shape_flow_set(&lognormal_sizes(), &lognormal_gaps(), 100_000, &params, &mut rng(1))
            .unwrap();
        assert_eq!(shaped.attempts, 1);
        assert!(shaped.size_jsd < 0.1 && shaped.iat_jsd < 0.1);
    }

    #[test]
    fn tiny_sample_cannot_meet_strict_threshold() {
        let params = ShapingParams {
            jsd_threshold: 1e-6,
            ..Default::default()
        };
        match shape_flow_set(&lognormal_sizes(), &lognormal_gaps(), 10, &params, &mut rng(1)) {
            Err(Error::ShapingFailure { best_jsd, attempts, .. }) => {
                assert_eq!(attempts, params.max_attempts);
                assert!(best_jsd > 1e-6 && best_jsd <= 1.0);
            }
            other => panic!("expected shaping failure, got {other:?}"),
        }
    }

    #[test]
    fn shaping_is_deterministic() {
        let params = ShapingParams::default();
        let a = shape_flow_set(&lognormal_sizes(), &lognormal_gaps(), 5_000, &params, &mut rng(77)).unwrap();
        let b = shape_flow_set(&lognormal_sizes(), &lognormal_gaps(), 5_000, &params, &mut rng(77)).unwrap();
        assert_eq!(a.flows, b.flows);
        assert!(a.flows.arrival_times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spec_json_shape() {
        let spec: DistributionSpec = serde_json::from_str(
            r#"{"family":"pareto","shape":2.0,"scale":1.0,"value_bounds":[1.0,100.0]}"#,
        )
        .unwrap();
        assert_eq!(spec.family, Family::Pareto { shape: 2.0, scale: 1.0 });
        let mix: DistributionSpec = serde_json::from_str(
            r#"{"family":"multimodal_mixture","components":[
                {"weight":0.5,"family":"exponential","rate":1.0},
                {"weight":0.5,"family":"uniform","low":2.0,"high":3.0}],
               "value_bounds":[0.01,10.0]}"#,
        )
        .unwrap();
        mix.validate("x").unwrap();
    }
}
