//! Balanced per-zone datasets of simulated power-delay profiles.
//!
//! File layout: 8-byte magic, little-endian `u64` header length, JSON
//! header, then one record per sample: `u64` id, `u32` zone, the location as
//! three `f64`, and `M · N_b` bin energies as `f64`, all little-endian.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mdfeat_core::channel::{
    draw_channel, sample_target_with, synthesize_received, GeometryConfig, Location, ScenarioConfig,
};
use mdfeat_core::features::{select_features, Scheme};
use mdfeat_core::frontend::{calibrate_noise, energy_detect, SignalConfig};
use mdfeat_core::rng::{derive_seed, rng_from_seed, tag};
use mdfeat_core::FeatureSet;
use mdfeat_core::PdpVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_at, Error, Result};
use crate::zones::ZoneLayout;

const MAGIC: &[u8; 8] = b"MDFDSv1\0";
const MAX_TARGET_DRAWS: usize = 100_000;
const MAX_CHANNEL_DRAWS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => tag::TRAIN_SPLIT,
            Split::Test => tag::TEST_SPLIT,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.mdfd",
            Split::Test => "test.mdfd",
        }
    }
}

/// Everything needed to simulate one SNR cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub geometry: GeometryConfig,
    pub scenario: ScenarioConfig,
    pub signal: SignalConfig,
    pub layout: ZoneLayout,
    pub snr_db: f64,
    pub noise_var: f64,
}

impl Setup {
    /// The noise level is calibrated with a fixed seed so that it depends on
    /// the SNR and the environment only.
    pub fn new(cfg: &ExperimentConfig, snr_db: f64) -> Result<Self> {
        cfg.validate()?;
        let scenario = cfg.scenario();
        let noise_var = calibrate_noise::<f64>(snr_db, &cfg.geometry, &scenario, cfg.calibration_targets, 0)?;
        Ok(Self {
            geometry: cfg.geometry.clone(),
            scenario,
            signal: cfg.signal.clone(),
            layout: cfg.layout(),
            snr_db,
            noise_var,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub split: Split,
    pub seed: u64,
    pub setup: Setup,
    pub sensors: usize,
    pub bins: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub zone: usize,
    pub location: [f64; 3],
    pub pdps: Vec<PdpVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

/// Per-zone quotas: `count / N_z` each, the first `count mod N_z` zones get one more.
pub fn zone_quotas(count: usize, zones: usize) -> Vec<usize> {
    (0..zones).map(|z| count / zones + usize::from(z < count % zones)).collect()
}

fn simulate_sample(setup: &Setup, seed: u64, zone: usize) -> Result<([f64; 3], Vec<PdpVector>)> {
    let mut rng = rng_from_seed(derive_seed(seed, &[tag::TARGET]));
    let mut target = None;
    for _ in 0..MAX_TARGET_DRAWS {
        let p: Location<f64> = sample_target_with(&mut rng, &setup.geometry);
        if setup.layout.zone_of(&p)? == zone {
            target = Some(p);
            break;
        }
    }
    let Some(target) = target else {
        return Err(Error::Config(format!("zone {zone} holds no valid target locations")));
    };
    for attempt in 0..MAX_CHANNEL_DRAWS {
        let real =
            draw_channel(derive_seed(seed, &[tag::CHANNEL, attempt]), &target, &setup.geometry, &setup.scenario)?;
        match synthesize_received(&real, &setup.signal, setup.noise_var, derive_seed(seed, &[tag::NOISE])) {
            Ok(waves) => {
                let pdps = waves.iter().map(|w| energy_detect(w, &setup.signal)).collect::<Result<Vec<_>, _>>()?;
                return Ok(([target.x, target.y, target.z], pdps));
            }
            Err(mdfeat_core::Error::FrameTooShort { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Config(format!("no channel fitting the {} s frame after {MAX_CHANNEL_DRAWS} draws", setup.signal.frame)))
}

/// `count` samples split evenly over the zones. Sample `j` of zone `z` is
/// drawn from `derive_seed(seed, [split, z, j])`, so samples are independent
/// of generation order and of each other.
pub fn generate_split(setup: &Setup, split: Split, count: usize, seed: u64) -> Result<Dataset> {
    setup.layout.validate()?;
    let jobs: Vec<(usize, usize)> = zone_quotas(count, setup.layout.num_zones())
        .into_iter()
        .enumerate()
        .flat_map(|(z, q)| (0..q).map(move |j| (z, j)))
        .collect();
    let samples = jobs
        .par_iter()
        .enumerate()
        .map(|(id, &(z, j))| {
            let (location, pdps) = simulate_sample(setup, derive_seed(seed, &[split.tag(), z as u64, j as u64]), z)?;
            Ok(Sample { id: id as u64, zone: z, location, pdps })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = DatasetHeader {
        split,
        seed,
        setup: setup.clone(),
        sensors: setup.geometry.num_sensors(),
        bins: setup.signal.num_bins()?,
        count,
    };
    Ok(Dataset { header, samples })
}

/// Train and test splits of one SNR cell.
pub fn generate_dataset(cfg: &ExperimentConfig, snr_db: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let setup = Setup::new(cfg, snr_db)?;
    Ok((
        generate_split(&setup, Split::Train, cfg.d_train, seed)?,
        generate_split(&setup, Split::Test, cfg.d_test, seed)?,
    ))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn zones(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.zone).collect()
    }

    /// Features of every sample; random-F bins are seeded per sample.
    pub fn features(&self, f: usize, scheme: Scheme) -> Result<Vec<FeatureSet>> {
        let split = self.header.split.tag();
        self.samples
            .iter()
            .map(|s| {
                Ok(select_features(
                    &s.pdps,
                    f,
                    scheme,
                    derive_seed(self.header.seed, &[tag::RANDOM_BINS, split, s.id]),
                )?)
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let json = serde_json::to_vec(&self.header).expect("header serializes");
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for s in &self.samples {
            w.write_all(&s.id.to_le_bytes())?;
            w.write_all(&(s.zone as u32).to_le_bytes())?;
            for v in s.location {
                w.write_all(&v.to_le_bytes())?;
            }
            for p in &s.pdps {
                for v in p.as_slice() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let bad = |msg: String| Error::Format { what: "dataset", msg };
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|e| bad(e.to_string()))?;
            Ok(buf)
        };
        if take(8)? != MAGIC {
            return Err(bad("not a dataset file".into()));
        }
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let header: DatasetHeader = serde_json::from_slice(&take(len)?).map_err(|e| bad(e.to_string()))?;
        let (m, nb) = (header.sensors, header.bins);
        let f64s =
            |b: &[u8]| -> Vec<f64> { b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect() };
        let mut samples = Vec::with_capacity(header.count);
        for _ in 0..header.count {
            let rec = take(12 + 8 * (3 + m * nb))?;
            let id = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let zone = u32::from_le_bytes(rec[8..12].try_into().unwrap()) as usize;
            let vals = f64s(&rec[12..]);
            let location = [vals[0], vals[1], vals[2]];
            let pdps = vals[3..].chunks_exact(nb).map(|c| PdpVector::new(c.to_vec())).collect::<Result<Vec<_>, _>>()?;
            samples.push(Sample { id, zone, location, pdps });
        }
        if !take(1).is_err() {
            return Err(bad("trailing bytes after the last record".into()));
        }
        Ok(Self { header, samples })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(io_at(path))?;
        self.write(BufWriter::new(file)).map_err(io_at(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(io_at(path))?;
        Self::read(BufReader::new(file))
    }
}
