//! Wind-speed-to-power conversion and two-point-per-variable estimates of
//! output moments under wind uncertainty, with a sampling cross-check.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::Distribution as _;

use crate::error::{Error, Result};
use crate::market::{clear_day_ahead, OfferSet};
use crate::netmodel::{SpeedDistribution, SystemCase, WindProducer};
use crate::redispatch::{solve_cmp, CmpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveShape {
    #[default]
    Cubic,
    Linear,
}

impl std::str::FromStr for CurveShape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cubic" => Ok(Self::Cubic),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown power curve shape {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub p_min: f64,
    pub p_max: f64,
    pub v_cut_in: f64,
    pub v_rated: f64,
    pub v_cut_out: f64,
    pub shape: CurveShape,
}

impl PowerCurve {
    pub fn from_producer(w: &WindProducer, shape: CurveShape) -> Self {
        Self {
            p_min: w.p_min,
            p_max: w.p_max,
            v_cut_in: w.v_cut_in,
            v_rated: w.v_rated,
            v_cut_out: w.v_cut_out,
            shape,
        }
    }
}

/// Output in MW at hub speed `v` (m/s).
pub fn wind_power_from_speed(v: f64, curve: &PowerCurve) -> f64 {
    let c = curve;
    if !(v >= c.v_cut_in && v <= c.v_cut_out) {
        return 0.0;
    }
    if v >= c.v_rated {
        return c.p_max;
    }
    let frac = match c.shape {
        CurveShape::Cubic => (v.powi(3) - c.v_cut_in.powi(3)) / (c.v_rated.powi(3) - c.v_cut_in.powi(3)),
        CurveShape::Linear => (v - c.v_cut_in) / (c.v_rated - c.v_cut_in),
    };
    c.p_max * frac
}

/// First three standardized moments of one uncertain input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
}

impl Moments {
    pub fn of(dist: &SpeedDistribution) -> Result<Self> {
        let bad = |e: String| Error::Degenerate(format!("speed distribution: {e}"));
        let (mean, std, skewness) = match *dist {
            SpeedDistribution::Weibull { scale, shape } => {
                let d = statrs::distribution::Weibull::new(shape, scale)
                    .map_err(|e| bad(e.to_string()))?;
                (d.mean(), d.std_dev(), d.skewness())
            }
            SpeedDistribution::Normal { mean, std } => {
                if std == 0.0 {
                    (Some(mean), Some(0.0), Some(0.0))
                } else {
                    let d = statrs::distribution::Normal::new(mean, std)
                        .map_err(|e| bad(e.to_string()))?;
                    (d.mean(), d.std_dev(), d.skewness())
                }
            }
        };
        match (mean, std, skewness) {
            (Some(mean), Some(std), Some(skewness))
                if mean.is_finite() && std.is_finite() && skewness.is_finite() =>
            {
                Ok(Self {
                    mean,
                    std,
                    skewness,
                })
            }
            _ => Err(bad("moments are not finite".into())),
        }
    }
}

/// One concentration point: every input's value and the point's weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PemPoint {
    pub values: Vec<f64>,
    pub weight: f64,
    /// Input moved off its mean, `None` for the all-means point.
    pub variable: Option<usize>,
}

/// Two points per uncertain input (Hong's 2m scheme), the others held at
/// their means. Inputs with zero spread stay at the mean and do not count
/// towards `m`; with none left the single all-means point carries weight 1.
pub fn pem_points(inputs: &[Moments]) -> Vec<PemPoint> {
    let means: Vec<f64> = inputs.iter().map(|m| m.mean).collect();
    let live: Vec<usize> = (0..inputs.len()).filter(|&k| inputs[k].std > 0.0).collect();
    if live.is_empty() {
        return vec![PemPoint {
            values: means,
            weight: 1.0,
            variable: None,
        }];
    }
    let m = live.len() as f64;
    let mut out = Vec::with_capacity(2 * live.len());
    for &k in &live {
        let Moments { mean, std, skewness } = inputs[k];
        let half = skewness / 2.0;
        let root = (m + half * half).sqrt();
        let xi = [half + root, half - root];
        let denom = m * (xi[0] - xi[1]);
        let w = [-xi[1] / denom, xi[0] / denom];
        for i in 0..2 {
            let mut values = means.clone();
            values[k] = mean + xi[i] * std;
            out.push(PemPoint {
                values,
                weight: w[i],
                variable: Some(k),
            });
        }
    }
    out
}

/// Per-output mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PemEstimate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub evaluations: usize,
    /// Generator seed when the estimate comes from sampling.
    pub seed: Option<u64>,
}

fn evaluate_all<F>(inputs: &[Vec<f64>], pipeline: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    inputs
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            pipeline(x).map_err(|e| Error::Scenario {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Weighted first and second moments, accumulated in input order.
fn moments(outputs: &[Vec<f64>], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = outputs.first().map_or(0, Vec::len);
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for (y, w) in outputs.iter().zip(weights) {
        for k in 0..n {
            m1[k] += w * y[k];
            m2[k] += w * y[k] * y[k];
        }
    }
    let std = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| (b - a * a).max(0.0).sqrt())
        .collect();
    (m1, std)
}

/// Evaluates the pipeline at every concentration point and combines the
/// results with the scheme weights.
pub fn propagate<F>(points: &[PemPoint], pipeline: F) -> Result<PemEstimate>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let inputs: Vec<Vec<f64>> = points.iter().map(|p| p.values.clone()).collect();
    let outputs = evaluate_all(&inputs, &pipeline)?;
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let (mean, std) = moments(&outputs, &weights);
    Ok(PemEstimate {
        mean,
        std,
        evaluations: points.len(),
        seed: None,
    })
}

fn sample(dist: &SpeedDistribution, rng: &mut ChaCha8Rng) -> Result<f64> {
    let bad = |e: String| Error::Degenerate(format!("speed distribution: {e}"));
    let v = match *dist {
        SpeedDistribution::Weibull { scale, shape } => rand_distr::Weibull::new(scale, shape)
            .map_err(|e| bad(e.to_string()))?
            .sample(rng),
        SpeedDistribution::Normal { mean, std } => rand_distr::Normal::new(mean, std)
            .map_err(|e| bad(e.to_string()))?
            .sample(rng),
    };
    Ok(v)
}

/// Plain sampling estimate of the same moments. Draws are generated in a
/// fixed order from `seed`, so equal seeds give equal estimates.
pub fn monte_carlo_oracle<F>(
    dists: &[SpeedDistribution],
    n: usize,
    seed: u64,
    pipeline: F,
) -> Result<PemEstimate>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if n == 0 {
        return Err(Error::Bounds {
            what: "samples".into(),
            value: 0.0,
            min: 1.0,
            max: f64::INFINITY,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = dists
            .iter()
            .map(|d| sample(d, &mut rng))
            .collect::<Result<Vec<f64>>>()?;
        inputs.push(x);
    }
    let outputs = evaluate_all(&inputs, &pipeline)?;
    let (mean, std) = moments(&outputs, &vec![1.0 / n as f64; n]);
    Ok(PemEstimate {
        mean,
        std,
        evaluations: n,
        seed: Some(seed),
    })
}

/// Wind speeds in, stage-1 clearing and stage-2 re-dispatch for one hour,
/// prices and flows out.
pub struct WindPipeline<'a> {
    pub case: &'a SystemCase,
    pub hour: usize,
    pub config: CmpConfig,
    pub curves: Vec<PowerCurve>,
}

impl<'a> WindPipeline<'a> {
    pub fn new(case: &'a SystemCase, hour: usize, config: CmpConfig, shape: CurveShape) -> Self {
        let curves = case
            .wind_producers
            .iter()
            .map(|w| PowerCurve::from_producer(w, shape))
            .collect();
        Self {
            case,
            hour,
            config,
            curves,
        }
    }

    pub fn speed_distributions(&self) -> Vec<SpeedDistribution> {
        self.case
            .wind_producers
            .iter()
            .map(WindProducer::speed_distribution)
            .collect()
    }

    pub fn input_moments(&self) -> Result<Vec<Moments>> {
        self.speed_distributions().iter().map(Moments::of).collect()
    }

    /// Output labels; the first entry is the bus-average LMP.
    pub fn output_names(&self) -> Vec<String> {
        let mut names = vec![
            "lmp_mean".to_string(),
            "cost".to_string(),
            "losses".to_string(),
        ];
        names.extend(self.case.buses.iter().map(|b| format!("lmp_bus_{}", b.id)));
        names.extend(self.case.lines.iter().map(|l| format!("flow_line_{}", l.id)));
        names
    }

    pub fn available_power(&self, speeds: &[f64]) -> Vec<f64> {
        speeds
            .iter()
            .zip(&self.curves)
            .map(|(v, c)| wind_power_from_speed(v.max(0.0), c))
            .collect()
    }

    pub fn evaluate(&self, speeds: &[f64]) -> Result<Vec<f64>> {
        self.evaluate_power(&self.available_power(speeds))
    }

    fn evaluate_power(&self, avail: &[f64]) -> Result<Vec<f64>> {
        let offers = OfferSet::from_case(self.case, self.hour, Some(avail));
        let stage1 = clear_day_ahead(&offers)?;
        let d = solve_cmp(self.case, &stage1, self.hour, None, &self.config)?;
        let mut out = vec![d.lmp.mean(), d.cost, d.losses];
        out.extend(&d.lmp.values);
        out.extend(d.flows.iter().map(|f| f.p_from));
        Ok(out)
    }

    pub fn pem(&self) -> Result<PemEstimate> {
        let points = pem_points(&self.input_moments()?);
        propagate(&points, |x| self.evaluate(x))
    }

    /// Sampling estimate. Speeds outside the ramp of the power curve map to
    /// the same farm output, so results are reused per output vector.
    pub fn monte_carlo(&self, n: usize, seed: u64) -> Result<PemEstimate> {
        let memo: Mutex<HashMap<Vec<u64>, Vec<f64>>> = Mutex::new(HashMap::new());
        monte_carlo_oracle(&self.speed_distributions(), n, seed, |x| {
            let avail = self.available_power(x);
            let key: Vec<u64> = avail.iter().map(|p| p.to_bits()).collect();
            if let Some(hit) = memo.lock().expect("memo lock").get(&key) {
                return Ok(hit.clone());
            }
            let out = self.evaluate_power(&avail)?;
            memo.lock().expect("memo lock").insert(key, out.clone());
            Ok(out)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::build_rts24;

    fn wpp1() -> PowerCurve {
        PowerCurve::from_producer(&build_rts24().wind_producers[0], CurveShape::Cubic)
    }

    #[test]
    fn curve_regions() {
        let c = wpp1();
        assert_eq!(c.v_cut_in, 8.0);
        assert_eq!(wind_power_from_speed(5.0, &c), 0.0);
        assert_eq!(wind_power_from_speed(12.0, &c), 110.0);
        assert_eq!(wind_power_from_speed(25.0, &c), 0.0);
        let mid = wind_power_from_speed(10.0, &c);
        assert!((mid - 110.0 * (1000.0 - 512.0) / (1728.0 - 512.0)).abs() < 1e-12);
        let lin = PowerCurve {
            shape: CurveShape::Linear,
            ..c
        };
        assert!((wind_power_from_speed(10.0, &lin) - 55.0).abs() < 1e-12);
    }

    fn gaussian(mean: f64, std: f64) -> Moments {
        Moments::of(&SpeedDistribution::Normal { mean, std }).unwrap()
    }

    #[test]
    fn symmetric_single_input_sits_one_sigma_out() {
        let p = pem_points(&[gaussian(10.0, 2.0)]);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].values, vec![12.0]);
        assert_eq!(p[1].values, vec![8.0]);
        assert_eq!(p[0].weight, 0.5);
        assert_eq!(p[1].weight, 0.5);
    }

    #[test]
    fn zero_spread_passes_through() {
        let p = pem_points(&[gaussian(7.0, 0.0)]);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].values, vec![7.0]);
        assert_eq!(p[0].weight, 1.0);
    }

    #[test]
    fn three_weibull_inputs_give_six_points() {
        let case = build_rts24();
        let m: Vec<Moments> = case
            .wind_producers
            .iter()
            .map(|w| Moments::of(&w.speed_distribution()).unwrap())
            .collect();
        let p = pem_points(&m);
        assert_eq!(p.len(), 6);
        let total: f64 = p.iter().map(|p| p.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_of_gaussian_mean_is_exact() {
        let p = pem_points(&[gaussian(10.0, 2.0)]);
        let e = propagate(&p, |x| Ok(vec![x[0] * x[0]])).unwrap();
        assert_eq!(e.mean[0], 104.0);
    }

    #[test]
    fn constant_pipeline() {
        let p = pem_points(&[gaussian(10.0, 2.0), gaussian(3.0, 1.0)]);
        let e = propagate(&p, |_| Ok(vec![4.5])).unwrap();
        assert!((e.mean[0] - 4.5).abs() < 1e-12);
        assert!(e.std[0] < 1e-6);
    }

    #[test]
    fn sampling_is_seeded() {
        let d = [SpeedDistribution::Normal {
            mean: 10.0,
            std: 2.0,
        }];
        let a = monte_carlo_oracle(&d, 500, 7, |x| Ok(vec![x[0]])).unwrap();
        let b = monte_carlo_oracle(&d, 500, 7, |x| Ok(vec![x[0]])).unwrap();
        assert_eq!(a, b);
        let one = monte_carlo_oracle(&d, 1, 7, |x| Ok(vec![x[0] * 3.0])).unwrap();
        assert_eq!(one.std[0], 0.0);
        assert!(monte_carlo_oracle(&d, 0, 7, |x| Ok(x.to_vec())).is_err());
    }

    #[test]
    fn failing_point_is_named() {
        let p = pem_points(&[gaussian(10.0, 2.0)]);
        let r = propagate(&p, |x| {
            if x[0] < 10.0 {
                Err(Error::Degenerate("low".into()))
            } else {
                Ok(vec![1.0])
            }
        });
        assert!(matches!(r, Err(Error::Scenario { index: 1, .. })));
    }
}
