use crate::error::{Error, Result};
use crate::scalar::Real;

/// Samples below this fraction of the peak force envelope count as silence.
pub const TRIM_FRACTION: f64 = 0.01;

/// One timestamped channel as recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Series<T> {
    pub name: String,
    /// s, strictly increasing
    pub time: Vec<T>,
    pub values: Vec<T>,
}

/// Uniformly sampled channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T> {
    pub name: String,
    pub values: Vec<T>,
}

/// Channels sharing one time column, as stored in a record file.
/// Force channel names are `<patch>_<axis>` (N), displacement names are sensor names (m).
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord<T> {
    pub time: Vec<T>,
    pub force: Vec<Channel<T>>,
    pub displacement: Vec<Channel<T>>,
}

impl<T: Real> RawRecord<T> {
    pub fn series(&self) -> (Vec<Series<T>>, Vec<Series<T>>) {
        let wrap = |chs: &[Channel<T>]| {
            chs.iter()
                .map(|c| Series {
                    name: c.name.clone(),
                    time: self.time.clone(),
                    values: c.values.clone(),
                })
                .collect()
        };
        (wrap(&self.force), wrap(&self.displacement))
    }
}

/// Trimmed record on a common uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord<T> {
    /// Hz
    pub rate: T,
    /// Time of the first sample, s.
    pub start: T,
    pub force: Vec<Channel<T>>,
    pub displacement: Vec<Channel<T>>,
}

impl<T: Real> SweepRecord<T> {
    pub fn len(&self) -> usize {
        self.force.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> T {
        T::from_count(self.len()) / self.rate
    }

    pub fn end(&self) -> T {
        self.start + T::from_count(self.len().saturating_sub(1)) / self.rate
    }
}

fn check_series<T: Real>(s: &Series<T>) -> Result<()> {
    if s.time.len() != s.values.len() {
        return Err(Error::Sampling(format!(
            "channel `{}` has {} timestamps and {} values",
            s.name,
            s.time.len(),
            s.values.len()
        )));
    }
    if s.time.len() < 2 {
        return Err(Error::Sampling(format!(
            "channel `{}` has fewer than two samples",
            s.name
        )));
    }
    if s.time.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Sampling(format!(
            "channel `{}` timestamps are not increasing",
            s.name
        )));
    }
    if s.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Sampling(format!(
            "channel `{}` contains non-finite samples",
            s.name
        )));
    }
    Ok(())
}

/// Linear interpolation of `s` at `t`, which must lie within the series' time span.
fn interpolate_at<T: Real>(s: &Series<T>, t: T) -> T {
    let k = s.time.partition_point(|&x| x <= t);
    if k == 0 {
        return s.values[0];
    }
    if k >= s.time.len() {
        return s.values[s.time.len() - 1];
    }
    let (t0, t1) = (s.time[k - 1], s.time[k]);
    let w = (t - t0) / (t1 - t0);
    s.values[k - 1] + w * (s.values[k] - s.values[k - 1])
}

/// Resamples every channel onto the grid of the first force channel inside the
/// common time window and cuts the leading and trailing silence.
pub fn trim_and_align<T: Real>(
    force: &[Series<T>],
    displacement: &[Series<T>],
) -> Result<SweepRecord<T>> {
    let reference = force
        .first()
        .ok_or_else(|| Error::Alignment("record has no force channel".into()))?;
    for s in force.iter().chain(displacement) {
        check_series(s)?;
    }
    let all = || force.iter().chain(displacement);
    let lo = all().map(|s| s.time[0]).fold(T::neg_infinity(), T::max);
    let hi = all()
        .map(|s| s.time[s.time.len() - 1])
        .fold(T::infinity(), T::min);
    if !(hi > lo) {
        return Err(Error::Alignment(format!(
            "channels share no time window (latest start {lo} s, earliest end {hi} s)"
        )));
    }
    let n_ref = reference.time.len();
    let dt = (reference.time[n_ref - 1] - reference.time[0]) / T::from_count(n_ref - 1);
    let slack = dt * T::lit(1e-6);
    let first = reference.time.partition_point(|&t| t < lo - slack);
    let last = reference.time.partition_point(|&t| t <= hi + slack);
    if last <= first + 1 {
        return Err(Error::Alignment(
            "common time window holds fewer than two samples".into(),
        ));
    }
    let grid = &reference.time[first..last];
    let resample =
        |s: &Series<T>| -> Vec<T> { grid.iter().map(|&t| interpolate_at(s, t)).collect() };
    let mut f: Vec<Vec<T>> = force.iter().map(resample).collect();
    let mut d: Vec<Vec<T>> = displacement.iter().map(resample).collect();

    let envelope: Vec<T> = (0..grid.len())
        .map(|n| f.iter().fold(T::zero(), |m, c| m.max(c[n].abs())))
        .collect();
    let peak = envelope.iter().copied().fold(T::zero(), T::max);
    let (a, b) = if peak > T::zero() {
        let cut = peak * T::lit(TRIM_FRACTION);
        let a = envelope.iter().position(|&v| v >= cut).unwrap_or(0);
        let b = envelope
            .iter()
            .rposition(|&v| v >= cut)
            .unwrap_or(grid.len() - 1);
        (a, b + 1)
    } else {
        (0, grid.len())
    };
    for c in f.iter_mut().chain(d.iter_mut()) {
        c.truncate(b);
        c.drain(..a);
    }
    let named = |src: &[Series<T>], data: Vec<Vec<T>>| -> Vec<Channel<T>> {
        src.iter()
            .zip(data)
            .map(|(s, values)| Channel {
                name: s.name.clone(),
                values,
            })
            .collect()
    };
    Ok(SweepRecord {
        rate: T::one() / dt,
        start: grid[a],
        force: named(force, f),
        displacement: named(displacement, d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(name: &str, t0: f64, n: usize, rate: f64, f: impl Fn(f64) -> f64) -> Series<f64> {
        let time: Vec<f64> = (0..n).map(|k| t0 + k as f64 / rate).collect();
        let values = time.iter().map(|&t| f(t)).collect();
        Series {
            name: name.into(),
            time,
            values,
        }
    }

    #[test]
    fn silence_padding_is_removed() {
        let rate = 1000.0;
        let tone = |t: f64| {
            if (1.0..3.0).contains(&t) {
                (2.0 * std::f64::consts::PI * 21.0 * t + 0.3).sin()
            } else {
                0.0
            }
        };
        let f = series("p_x", 0.0, 4000, rate, tone);
        let d = series("s1x", 0.0, 4000, rate, |t| 1e-6 * tone(t));
        let r = trim_and_align(&[f], &[d]).unwrap();
        assert!((r.start - 1.0).abs() <= 1.0 / rate);
        assert!((r.end() - 3.0).abs() <= 1.0 / rate);
        assert_eq!(r.force[0].values.len(), r.displacement[0].values.len());
    }

    #[test]
    fn disjoint_ranges_fail() {
        let f = series("p_x", 0.0, 100, 100.0, |t| t.sin());
        let d = series("s1x", 5.0, 100, 100.0, |t| t.sin());
        assert!(matches!(
            trim_and_align(&[f], &[d]),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn offset_channel_is_resampled_onto_force_grid() {
        let f = series("p_x", 0.0, 1000, 100.0, |t| 1.0 + t);
        let d = series("s1x", 0.005, 1000, 100.0, |t| 2.0 * t);
        let r = trim_and_align(&[f], &[d]).unwrap();
        let t0 = r.start;
        for (k, v) in r.displacement[0].values.iter().enumerate() {
            let t = t0 + k as f64 / r.rate;
            assert!((v - 2.0 * t).abs() < 1e-9);
        }
    }
}
