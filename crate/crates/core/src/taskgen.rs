//! Synthetic workload generation.
//!
//! Utilizations are split with Stafford's Randfixedsum, which samples
//! uniformly from the part of the simplex `sum x = total` that lies inside
//! the cube `[lo, hi]^n`.
//!
//! Every config is drawn from a `ChaCha8Rng` seeded with `GenParams::seed`.
//! Sweep seeds are derived from a master seed by [`derive_seed`] (SplitMix64
//! of the master seed offset by the replication index). All utilization
//! points of one replication share a seed, so the task counts and periods of
//! replication `r` coincide across the sweep.

use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{int, ratio, validate_config, Rational, RealTimeTask, SecurityTask, SystemConfig, Time};
use crate::partition::best_fit_partition;
use crate::schedulability::{default_horizon, necessary_condition};

/// Allowed relative deviation of the generated real-time utilization.
pub const UTIL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeriodDist {
    LogUniform,
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub cores: usize,
    pub rt_count: (usize, usize),
    pub sec_count: (usize, usize),
    pub rt_period_us: (u64, u64),
    pub sec_des_period_us: (u64, u64),
    pub sec_max_period_factor: u64,
    pub total_rt_util: Rational,
    /// Security utilization (against desired periods) relative to the
    /// real-time utilization.
    pub sec_util_fraction: Rational,
    pub period_dist: PeriodDist,
    pub redraw_limit: u32,
    pub seed: u64,
}

impl GenParams {
    /// `[3M, 10M]` real-time tasks with periods in 10 ms..1 s, `[2M, 5M]`
    /// security tasks with desired periods in 1 s..3 s and `T_max = 10 T_des`,
    /// security load at 30% of the real-time load.
    pub fn new(cores: usize, total_rt_util: Rational, seed: u64) -> Self {
        GenParams {
            cores,
            rt_count: (3 * cores, 10 * cores),
            sec_count: (2 * cores, 5 * cores),
            rt_period_us: (10_000, 1_000_000),
            sec_des_period_us: (1_000_000, 3_000_000),
            sec_max_period_factor: 10,
            total_rt_util,
            sec_util_fraction: ratio(3, 10),
            period_dist: PeriodDist::LogUniform,
            redraw_limit: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn range<T: PartialOrd + Copy + Zero>(field: &'static str, r: (T, T)) -> Result<()> {
            if r.0 > r.1 {
                return Err(Error::InvalidParam {
                    field,
                    reason: "lower bound exceeds upper bound".into(),
                });
            }
            if r.0.is_zero() {
                return Err(Error::InvalidParam {
                    field,
                    reason: "lower bound must be positive".into(),
                });
            }
            Ok(())
        }
        if self.cores == 0 {
            return Err(Error::InvalidParam {
                field: "cores",
                reason: "must be positive".into(),
            });
        }
        range("rt_count", self.rt_count)?;
        range("sec_count", self.sec_count)?;
        range("rt_period_us", self.rt_period_us)?;
        range("sec_des_period_us", self.sec_des_period_us)?;
        if self.sec_max_period_factor == 0 {
            return Err(Error::InvalidParam {
                field: "sec_max_period_factor",
                reason: "must be positive".into(),
            });
        }
        if !self.total_rt_util.is_positive() || self.total_rt_util > int(self.cores as u64) {
            return Err(Error::InvalidParam {
                field: "total_rt_util",
                reason: format!("must lie in (0, {}]", self.cores),
            });
        }
        if self.total_rt_util > int(self.rt_count.0 as u64) {
            return Err(Error::InvalidParam {
                field: "rt_count",
                reason: "too few tasks to carry the requested utilization".into(),
            });
        }
        if self.sec_util_fraction.is_negative() {
            return Err(Error::InvalidParam {
                field: "sec_util_fraction",
                reason: "must be non-negative".into(),
            });
        }
        if &self.total_rt_util * &self.sec_util_fraction > int(self.sec_count.0 as u64) {
            return Err(Error::InvalidParam {
                field: "sec_util_fraction",
                reason: "too few security tasks to carry the requested utilization".into(),
            });
        }
        Ok(())
    }
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Draws `n` values in `[lo, hi]` summing exactly to `total`, uniformly over
/// that constrained simplex.
pub fn randfixedsum<R: Rng + ?Sized>(
    n: usize,
    total: &Rational,
    lo: &Rational,
    hi: &Rational,
    rng: &mut R,
) -> Result<Vec<Rational>> {
    let n_r = int(n as u64);
    if n == 0 || lo > hi || total < &(&n_r * lo) || total > &(&n_r * hi) {
        return Err(Error::InvalidParam {
            field: "total",
            reason: format!("need n*lo <= total <= n*hi with n = {n}"),
        });
    }
    if lo == hi {
        return Ok(vec![lo.clone(); n]);
    }
    let (a, b) = (to_f64(lo), to_f64(hi));
    let unit = randfixedsum_unit(n, (to_f64(total) - n as f64 * a) / (b - a), rng);
    let values: Vec<f64> = unit.into_iter().map(|x| (b - a) * x + a).collect();
    renormalize(&values, total, lo, hi)
}

/// Core of Randfixedsum on the unit cube: `n` values in `[0, 1]` summing to `s`.
fn randfixedsum_unit<R: Rng + ?Sized>(n: usize, s: f64, rng: &mut R) -> Vec<f64> {
    let k = (s.floor() as i64).clamp(0, n as i64 - 1) as usize;
    let mut s = s.clamp(k as f64, k as f64 + 1.0);
    let s1: Vec<f64> = (0..n).map(|i| s - (k as f64 - i as f64)).collect();
    let s2: Vec<f64> = (0..n).map(|i| (k + n - i) as f64 - s).collect();

    // Transition probabilities between simplex types, scaled to the full
    // double range to avoid underflow.
    let tiny = f64::from_bits(1);
    let mut w = vec![vec![0.0f64; n + 1]; n];
    w[0][1] = f64::MAX;
    let mut t = vec![vec![0.0f64; n]; n.saturating_sub(1)];
    for i in 2..=n {
        let fi = i as f64;
        for j in 0..i {
            let tmp1 = w[i - 2][j + 1] * s1[j] / fi;
            let tmp2 = w[i - 2][j] * s2[n - i + j] / fi;
            w[i - 1][j + 1] = tmp1 + tmp2;
            let tmp3 = w[i - 1][j + 1] + tiny;
            t[i - 2][j] = if s2[n - i + j] > s1[j] {
                tmp2 / tmp3
            } else {
                1.0 - tmp1 / tmp3
            };
        }
    }

    let mut x = vec![0.0f64; n];
    let mut col = k as i64;
    let (mut sm, mut pr) = (0.0f64, 1.0f64);
    for i in (1..n).rev() {
        let rt: f64 = rng.gen();
        let rs: f64 = rng.gen();
        let e = if col >= 0 && rt <= t[i - 1][col as usize] {
            1.0
        } else {
            0.0
        };
        let sx = rs.powf(1.0 / i as f64);
        sm += (1.0 - sx) * pr * s / (i as f64 + 1.0);
        pr *= sx;
        x[n - i - 1] = sm + pr * e;
        s -= e;
        col -= e as i64;
    }
    x[n - 1] = sm + pr * s;
    x.shuffle(rng);
    x
}

/// Converts float draws to rationals and spreads the residual against
/// `total` over components with room, so the sum is exact.
fn renormalize(values: &[f64], total: &Rational, lo: &Rational, hi: &Rational) -> Result<Vec<Rational>> {
    let mut out: Vec<Rational> = values
        .iter()
        .map(|&v| {
            let r = Rational::from_f64(v).unwrap_or_else(Rational::zero);
            r.max(lo.clone()).min(hi.clone())
        })
        .collect();
    let sum = out.iter().fold(Rational::zero(), |acc, v| acc + v);
    let mut residual = total - sum;
    if to_f64(&residual).abs() > 1e-9 * to_f64(total).abs().max(1.0) {
        return Err(Error::InvalidParam {
            field: "total",
            reason: "randfixedsum drifted from the requested sum".into(),
        });
    }
    for v in out.iter_mut() {
        if residual.is_zero() {
            break;
        }
        let room = if residual.is_positive() { hi - &*v } else { lo - &*v };
        let step = if residual.is_positive() {
            room.min(residual.clone())
        } else {
            room.max(residual.clone())
        };
        *v += &step;
        residual -= step;
    }
    Ok(out)
}

fn draw_period<R: Rng + ?Sized>(range: (u64, u64), dist: PeriodDist, rng: &mut R) -> u64 {
    match dist {
        PeriodDist::Uniform => rng.gen_range(range.0..=range.1),
        PeriodDist::LogUniform => {
            let (lo, hi) = ((range.0 as f64).ln(), (range.1 as f64).ln());
            let v: f64 = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
            (v.exp().round() as u64).clamp(range.0, range.1)
        }
    }
}

/// Turns utilizations into integer WCETs (and possibly nudges the period of
/// the longest-period task) so that the summed utilization stays within
/// [`UTIL_TOLERANCE`] of the target.
fn quantize_rt(
    utils: &[f64],
    periods: &mut [u64],
    target: f64,
    period_range: (u64, u64),
) -> std::result::Result<Vec<u64>, String> {
    let n = utils.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (periods[i], i));
    let last = order.pop().expect("at least one task");

    let mut wcet = vec![0u64; n];
    let (mut want, mut have) = (0.0f64, 0.0f64);
    for &i in &order {
        want += utils[i];
        let c = ((want - have) * periods[i] as f64)
            .round()
            .clamp(1.0, periods[i] as f64) as u64;
        wcet[i] = c;
        have += c as f64 / periods[i] as f64;
    }
    let residual = target - have;
    if residual <= 0.0 || residual > 1.0 {
        return Err(format!("residual utilization {residual} out of range"));
    }
    let tol = UTIL_TOLERANCE * target / 4.0;
    let fit = |t: u64| {
        let c = (residual * t as f64).round().clamp(1.0, t as f64);
        (c as u64, (c / t as f64 - residual).abs())
    };
    let start = periods[last];
    for step in 0..200_000u64 {
        for cand in [start.checked_add(step), start.checked_sub(step)] {
            let Some(t) = cand else { continue };
            if t < period_range.0 || t > period_range.1 {
                continue;
            }
            let (c, err) = fit(t);
            if err <= tol {
                periods[last] = t;
                wcet[last] = c;
                return Ok(wcet);
            }
        }
    }
    Err("no period approximates the residual utilization".into())
}

fn draw_once<R: Rng + ?Sized>(p: &GenParams, rng: &mut R) -> std::result::Result<SystemConfig, String> {
    let n_rt = rng.gen_range(p.rt_count.0..=p.rt_count.1);
    let n_sec = rng.gen_range(p.sec_count.0..=p.sec_count.1);
    let mut periods: Vec<u64> = (0..n_rt)
        .map(|_| draw_period(p.rt_period_us, p.period_dist, rng))
        .collect();
    let desired: Vec<u64> = (0..n_sec)
        .map(|_| rng.gen_range(p.sec_des_period_us.0..=p.sec_des_period_us.1))
        .collect();

    let (zero, one) = (Rational::zero(), Rational::one());
    let rt_utils = randfixedsum(n_rt, &p.total_rt_util, &zero, &one, rng).map_err(|e| e.to_string())?;
    let sec_total = &p.total_rt_util * &p.sec_util_fraction;
    let sec_utils = if sec_total.is_zero() {
        vec![Rational::zero(); n_sec]
    } else {
        randfixedsum(n_sec, &sec_total, &zero, &one, rng).map_err(|e| e.to_string())?
    };

    let rt_f: Vec<f64> = rt_utils.iter().map(to_f64).collect();
    let wcets = quantize_rt(&rt_f, &mut periods, to_f64(&p.total_rt_util), p.rt_period_us)?;
    let rt_tasks: Vec<RealTimeTask> = (0..n_rt)
        .map(|i| RealTimeTask::new(format!("rt{i}"), Time(wcets[i]), Time(periods[i])))
        .collect();
    let sec_tasks: Vec<SecurityTask> = (0..n_sec)
        .map(|i| {
            let des = desired[i];
            let c = (to_f64(&sec_utils[i]) * des as f64).round().clamp(1.0, des as f64) as u64;
            SecurityTask::new(
                format!("sec{i}"),
                Time(c),
                Time(des),
                Time(des * p.sec_max_period_factor),
            )
        })
        .collect();

    let mut config = SystemConfig::new(crate::model::Platform::new(p.cores), rt_tasks, sec_tasks);
    let achieved = config.rt_utilization();
    let deviation = to_f64(&(achieved - &p.total_rt_util).abs()) / to_f64(&p.total_rt_util);
    if deviation > UTIL_TOLERANCE {
        return Err(format!("utilization deviates by {deviation:e}"));
    }
    config.platform = best_fit_partition(&config.rt_tasks, p.cores)
        .map_err(|f| format!("best-fit partitioning failed at `{}`", f.0))?;
    let violations = validate_config(&config);
    if let Some(v) = violations.first() {
        return Err(v.to_string());
    }
    if !necessary_condition(&config.rt_tasks, p.cores, default_horizon(&config.rt_tasks)) {
        return Err("demand-bound necessary condition fails".into());
    }
    Ok(config)
}

/// Draws a partitioned, validated config, redrawing on any rejection up to
/// `params.redraw_limit` times.
pub fn generate_taskset(params: &GenParams) -> Result<SystemConfig> {
    generate_counted(params).map(|(c, _)| c)
}

/// As [`generate_taskset`], also returning how many draws were rejected.
pub fn generate_counted(params: &GenParams) -> Result<(SystemConfig, u32)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut last_reason = String::new();
    for attempt in 0..params.redraw_limit.max(1) {
        match draw_once(params, &mut rng) {
            Ok(config) => return Ok((config, attempt)),
            Err(reason) => last_reason = reason,
        }
    }
    Err(Error::RedrawLimit {
        attempts: params.redraw_limit.max(1),
        last_reason,
    })
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_add(1)))
}

/// Number of utilization points in a sweep (0.025 M to 0.975 M).
pub const SWEEP_POINTS: usize = 39;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepItem {
    /// 1-based utilization step; total utilization is `point * M / 40`.
    pub point: usize,
    pub replication: usize,
    pub params: GenParams,
}

/// Utilization `0.025 M, 0.05 M, ..., 0.975 M` times `replications` configs,
/// ordered by point then replication.
pub fn sweep_params(cores: usize, replications: usize, master_seed: u64) -> Vec<SweepItem> {
    sweep_with(cores, replications, master_seed, |p| p)
}

/// As [`sweep_params`], applying `adjust` to every generated parameter set.
pub fn sweep_with(
    cores: usize,
    replications: usize,
    master_seed: u64,
    adjust: impl Fn(GenParams) -> GenParams,
) -> Vec<SweepItem> {
    let mut out = Vec::with_capacity(SWEEP_POINTS * replications);
    for point in 1..=SWEEP_POINTS {
        let util = ratio((point * cores) as u64, 40);
        for replication in 0..replications {
            let seed = derive_seed(master_seed, replication as u64);
            out.push(SweepItem {
                point,
                replication,
                params: adjust(GenParams::new(cores, util.clone(), seed)),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn r(v: f64) -> Rational {
        Rational::from_f64(v).unwrap()
    }

    #[test]
    fn single_value_is_forced() {
        let v = randfixedsum(1, &ratio(1, 2), &Rational::zero(), &int(1), &mut rng(1)).unwrap();
        assert_eq!(v, vec![ratio(1, 2)]);
    }

    #[test]
    fn tight_total_forces_components() {
        let total = ratio(29, 10);
        for seed in 0..200 {
            let v = randfixedsum(3, &total, &Rational::zero(), &int(1), &mut rng(seed)).unwrap();
            assert_eq!(v.iter().fold(Rational::zero(), |a, x| a + x), total);
            assert!(v.iter().all(|x| *x >= r(0.9) - r(1e-12) && *x <= int(1)));
        }
    }

    #[test]
    fn infeasible_total_is_rejected() {
        assert!(randfixedsum(2, &int(3), &Rational::zero(), &int(1), &mut rng(0)).is_err());
        assert!(randfixedsum(0, &int(0), &Rational::zero(), &int(1), &mut rng(0)).is_err());
    }

    #[test]
    fn general_bounds_are_respected() {
        let (lo, hi) = (ratio(1, 10), ratio(1, 2));
        for seed in 0..100 {
            let v = randfixedsum(6, &ratio(3, 2), &lo, &hi, &mut rng(seed)).unwrap();
            assert_eq!(v.iter().fold(Rational::zero(), |a, x| a + x), ratio(3, 2));
            assert!(v.iter().all(|x| *x >= lo && *x <= hi));
        }
    }

    #[test]
    fn generated_config_has_expected_shape() {
        let params = GenParams::new(2, ratio(1, 10), 7);
        let cfg = generate_taskset(&params).unwrap();
        assert!((6..=20).contains(&cfg.rt_tasks.len()));
        assert!((4..=10).contains(&cfg.sec_tasks.len()));
        assert!(validate_config(&cfg).is_empty());
        for s in &cfg.sec_tasks {
            assert_eq!(s.max_period.0, 10 * s.desired_period.0);
            assert!((1_000_000..=3_000_000).contains(&s.desired_period.0));
        }
        for t in &cfg.rt_tasks {
            assert!((10_000..=1_000_000).contains(&t.period.0));
        }
        let util = to_f64(&cfg.rt_utilization());
        assert!((util - 0.1).abs() <= 0.1 * UTIL_TOLERANCE);
    }

    #[test]
    fn generation_is_deterministic() {
        let params = GenParams::new(4, ratio(3, 2), 99);
        assert_eq!(generate_taskset(&params).unwrap(), generate_taskset(&params).unwrap());
    }

    #[test]
    fn overloaded_generation_hits_the_redraw_limit() {
        let mut params = GenParams::new(2, ratio(39, 20), 3);
        params.redraw_limit = 5;
        match generate_counted(&params) {
            Err(Error::RedrawLimit { attempts, .. }) => assert_eq!(attempts, 5),
            Ok((_, redraws)) => assert!(redraws < 5),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn bad_ranges_name_the_field() {
        let mut params = GenParams::new(2, ratio(1, 2), 0);
        params.rt_period_us = (5, 1);
        match params.validate() {
            Err(Error::InvalidParam { field, .. }) => assert_eq!(field, "rt_period_us"),
            other => panic!("{other:?}"),
        }
        let params = GenParams::new(2, int(3), 0);
        assert!(matches!(
            params.validate(),
            Err(Error::InvalidParam {
                field: "total_rt_util",
                ..
            })
        ));
    }

    #[test]
    fn sweep_grid() {
        let items = sweep_params(2, 10, 1);
        assert_eq!(items.len(), 390);
        assert_eq!(items[0].params.total_rt_util, ratio(1, 20));
        assert_eq!(items.last().unwrap().params.total_rt_util, ratio(39, 20));
        assert_eq!(sweep_params(8, 250, 1).len(), 9750);
        // Replications share seeds across points.
        assert_eq!(items[0].params.seed, items[10].params.seed);
        assert_ne!(items[0].params.seed, items[1].params.seed);
    }
}
