//! Receiver front end: energy detection and noise calibration.

use std::io::{BufRead, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{self, GeometryConfig, Location, ScenarioConfig};
use crate::error::{input, Error, Result};
use crate::rng;
use crate::scalar::Real;

/// Bandwidth (Hz), frame length (s) and integration period (s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub bandwidth: f64,
    pub frame: f64,
    pub integration: f64,
}

impl Default for SignalConfig {
    /// 2 GHz, 200 ns frame, 2 ns bins: 100 bins of 8 samples each.
    fn default() -> Self {
        Self { bandwidth: 2e9, frame: 200e-9, integration: 2e-9 }
    }
}

fn near_integer(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() <= 1e-6 * r.abs().max(1.0) && r >= 0.0).then_some(r as usize)
}

impl SignalConfig {
    /// Nyquist sampling rate `2W`.
    pub fn sample_rate(&self) -> f64 {
        2.0 * self.bandwidth
    }

    /// Samples per bin, `2 W T_g`; also the chi-square degrees of freedom.
    pub fn samples_per_bin(&self) -> Result<usize> {
        match near_integer(self.sample_rate() * self.integration) {
            Some(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "2*W*T_g = {} must be a positive integer",
                self.sample_rate() * self.integration
            ))),
        }
    }

    pub fn dof(&self) -> Result<f64> {
        self.samples_per_bin().map(|n| n as f64)
    }

    /// `floor(T_f / T_g)`.
    pub fn num_bins(&self) -> Result<usize> {
        let ratio = self.frame / self.integration;
        let n = (ratio + 1e-9).floor();
        if !(n >= 1.0) {
            return Err(Error::Config(format!("frame {} s holds no {} s bin", self.frame, self.integration)));
        }
        Ok(n as usize)
    }

    /// Waveform length `2 W T_f`, rounded to the nearest sample.
    pub fn frame_samples(&self) -> Result<usize> {
        let n = (self.sample_rate() * self.frame).round();
        if !(n >= 1.0) {
            return Err(Error::Config("frame shorter than one sample".into()));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.frame > 0.0 && self.integration > 0.0) {
            return Err(Error::Config("bandwidth, frame and integration must be positive".into()));
        }
        let spb = self.samples_per_bin()?;
        let nb = self.num_bins()?;
        if nb * spb > self.frame_samples()? {
            return Err(Error::Config("bins overrun the frame".into()));
        }
        Ok(())
    }
}

/// Per-bin energies of one sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PdpVector<T>(pub Vec<T>);

impl<T: Real> PdpVector<T> {
    pub fn new(energies: Vec<T>) -> Result<Self> {
        if energies.iter().any(|e| !(*e >= T::zero())) {
            return input("PDP energies must be non-negative");
        }
        Ok(Self(energies))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn total(&self) -> T {
        self.0.iter().copied().sum()
    }

    pub fn cast<U: Real>(&self) -> PdpVector<U> {
        PdpVector(self.0.iter().map(|v| U::lit(v.to_f64_lossy())).collect())
    }
}

fn bin_energies<T: Real>(samples: &[Complex<T>], signal: &SignalConfig) -> Result<PdpVector<T>> {
    let spb = signal.samples_per_bin()?;
    let nb = signal.num_bins()?;
    let scale = T::one() / T::lit(signal.sample_rate());
    let bins =
        samples.chunks(spb).take(nb).map(|chunk| chunk.iter().map(|s| s.norm_sqr()).sum::<T>() * scale).collect();
    Ok(PdpVector(bins))
}

/// Square-law detector followed by an integrator over each `T_g` bin:
/// `e_n = 1/(2W) * sum |r(n T_g + i/2W)|^2`.
pub fn energy_detect<T: Real>(waveform: &[Complex<T>], signal: &SignalConfig) -> Result<PdpVector<T>> {
    let expected = signal.frame_samples()?;
    if waveform.len() != expected {
        return input(format!("waveform has {} samples, expected {expected}", waveform.len()));
    }
    bin_energies(waveform, signal)
}

/// Nyquist-rate correlator against `template`, binned like [`energy_detect`].
/// Output sample `n` is `sum_k r[n + k] * conj(s[k])`, so a ray at sample `j`
/// peaks at `j`.
pub fn matched_filter_detect<T: Real>(
    waveform: &[Complex<T>],
    template: &[Complex<T>],
    signal: &SignalConfig,
) -> Result<PdpVector<T>> {
    let expected = signal.frame_samples()?;
    if waveform.len() != expected {
        return input(format!("waveform has {} samples, expected {expected}", waveform.len()));
    }
    if template.is_empty() {
        return input("matched-filter template is empty");
    }
    let n = waveform.len();
    let correlated: Vec<Complex<T>> = (0..n)
        .map(|i| {
            template
                .iter()
                .enumerate()
                .take_while(|(k, _)| i + k < n)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (k, s)| acc + waveform[i + k] * s.conj())
        })
        .collect();
    bin_energies(&correlated, signal)
}

/// Noise variance giving the requested average SNR, where SNR is the
/// line-of-sight mean power (shadowing at its median of 1) averaged over
/// `n_mc` uniform targets and all sensors, divided by the noise variance.
pub fn calibrate_noise<T: Real>(
    snr_db: f64,
    geometry: &GeometryConfig,
    scenario: &ScenarioConfig,
    n_mc: usize,
    seed: u64,
) -> Result<T> {
    if n_mc == 0 {
        return input("calibration needs at least one Monte-Carlo target");
    }
    geometry.validate()?;
    let mean = mean_los_power(geometry, scenario, n_mc, seed)?;
    Ok(T::lit(mean / 10f64.powf(snr_db / 10.0)))
}

/// Monte-Carlo mean of the unshadowed line-of-sight power over the target
/// space and all sensors.
pub fn mean_los_power(geometry: &GeometryConfig, scenario: &ScenarioConfig, n_mc: usize, seed: u64) -> Result<f64> {
    let mut rng = rng::rng_from_seed(rng::derive_seed(seed, &[rng::tag::CALIBRATION]));
    let sensors = geometry.sensors::<f64>();
    let mut acc = 0.0;
    for _ in 0..n_mc {
        let target: Location<f64> = channel::sample_target_with(&mut rng, geometry);
        for s in &sensors {
            acc += channel::los_pathloss(s.distance(&target), 1.0, scenario)?;
        }
    }
    Ok(acc / (n_mc * sensors.len()) as f64)
}

/// Writes PDP rows as text: a `#` header with `W`, `T_g` and `N_b`, a
/// column header, then one row per sensor frame.
pub fn write_pdp_table<T: Real, W: Write>(
    mut out: W,
    signal: &SignalConfig,
    rows: &[(usize, usize, &PdpVector<T>)],
) -> Result<()> {
    let nb = signal.num_bins()?;
    writeln!(out, "# bandwidth_hz={:e} integration_s={:e} n_bins={nb}", signal.bandwidth, signal.integration)?;
    write!(out, "frame,sensor")?;
    for n in 0..nb {
        write!(out, ",e{n}")?;
    }
    writeln!(out)?;
    for (frame, sensor, pdp) in rows {
        if pdp.len() != nb {
            return input(format!("PDP row has {} bins, header says {nb}", pdp.len()));
        }
        write!(out, "{frame},{sensor}")?;
        for e in pdp.as_slice() {
            write!(out, ",{e:e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdpTable {
    pub bandwidth: f64,
    pub integration: f64,
    pub rows: Vec<(usize, usize, PdpVector<f64>)>,
}

pub fn read_pdp_table<R: BufRead>(reader: R) -> Result<PdpTable> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty PDP table".into()))??;
    let mut bandwidth = None;
    let mut integration = None;
    let mut n_bins = None;
    for kv in header.trim_start_matches('#').split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv}")))?;
        let parse = |v: &str| v.parse::<f64>().map_err(|e| Error::Parse(format!("{k}: {e}")));
        match k {
            "bandwidth_hz" => bandwidth = Some(parse(v)?),
            "integration_s" => integration = Some(parse(v)?),
            "n_bins" => n_bins = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("n_bins: {e}")))?),
            _ => {}
        }
    }
    let (bandwidth, integration, n_bins) = match (bandwidth, integration, n_bins) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::Parse("PDP header needs bandwidth_hz, integration_s and n_bins".into())),
    };
    lines.next().ok_or_else(|| Error::Parse("missing column header".into()))??;
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_usize = |name: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {name}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("{name}: {e}")))
        };
        let frame = next_usize("frame")?;
        let sensor = next_usize("sensor")?;
        let energies = fields
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("energy: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if energies.len() != n_bins {
            return Err(Error::Parse(format!("row has {} energies, expected {n_bins}", energies.len())));
        }
        rows.push((frame, sensor, PdpVector::new(energies)?));
    }
    Ok(PdpTable { bandwidth, integration, rows })
}
