//! Seeded random ensembles of stationary atoms.
//!
//! Positions are uniform in an axis-aligned box. Each replica draws from its
//! own ChaCha8 stream of the same seed, so replicas are independent and the
//! draw for replica `r` never depends on how many others were generated.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::WeakFieldMetric;
use crate::modes::RealVec3;

/// Axis-aligned sampling volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub center: [f64; 3],
    pub size: [f64; 3],
}

impl SampleBox {
    pub fn new(center: [f64; 3], size: [f64; 3]) -> Result<Self> {
        let b = Self { center, size };
        b.validate()?;
        Ok(b)
    }

    pub fn cube(center: [f64; 3], edge: f64) -> Result<Self> {
        Self::new(center, [edge; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("box center must be finite".into()));
        }
        if self.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Invalid(format!("box edges must be > 0, got {:?}", self.size)));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    pub fn lower(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.center[i] - 0.5 * self.size[i])
    }

    pub fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.center[i] + 0.5 * self.size[i])
    }

    pub fn contains(&self, r: &RealVec3) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        (0..3).all(|i| r[i] >= lo[i] && r[i] <= hi[i])
    }
}

/// Atom positions drawn for one replica, with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Vec<RealVec3>,
    sample_box: SampleBox,
    seed: u64,
    stream: u64,
    weights: Option<Vec<f64>>,
}

impl Ensemble {
    /// Draws `n` positions uniformly in `sample_box` from stream `stream` of `seed`.
    pub fn sample(sample_box: SampleBox, n: usize, seed: u64, stream: u64) -> Result<Self> {
        sample_box.validate()?;
        if n == 0 {
            return Err(Error::Invalid("ensemble needs at least one atom".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let lo = sample_box.lower();
        let positions = (0..n)
            .map(|_| {
                Vector3::new(
                    lo[0] + sample_box.size[0] * rng.random::<f64>(),
                    lo[1] + sample_box.size[1] * rng.random::<f64>(),
                    lo[2] + sample_box.size[2] * rng.random::<f64>(),
                )
            })
            .collect();
        Ok(Self {
            positions,
            sample_box,
            seed,
            stream,
            weights: None,
        })
    }

    /// Wraps explicit positions; every position must lie in the box.
    pub fn from_positions(positions: Vec<RealVec3>, sample_box: SampleBox, seed: u64) -> Result<Self> {
        sample_box.validate()?;
        if positions.is_empty() {
            return Err(Error::Invalid("ensemble needs at least one atom".into()));
        }
        if let Some(j) = positions.iter().position(|r| !sample_box.contains(r)) {
            return Err(Error::Invalid(format!("atom {j} lies outside the sampling box")));
        }
        Ok(Self {
            positions,
            sample_box,
            seed,
            stream: 0,
            weights: None,
        })
    }

    /// Attaches the proper-volume importance weight `√(1 − aζ)` per atom.
    pub fn with_volume_weights(mut self, metric: &WeakFieldMetric) -> Result<Self> {
        let w = self
            .positions
            .iter()
            .map(|r| metric.offset(r.z).map(|dz| (1.0 - metric.a * dz).sqrt()))
            .collect::<Result<Vec<_>>>()?;
        self.weights = Some(w);
        Ok(self)
    }

    /// Shifts every atom and the box by `shift`.
    pub fn translated(&self, shift: &RealVec3) -> Self {
        let mut out = self.clone();
        for r in &mut out.positions {
            *r += shift;
        }
        for i in 0..3 {
            out.sample_box.center[i] += shift[i];
        }
        out
    }

    pub fn positions(&self) -> &[RealVec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn sample_box(&self) -> &SampleBox {
        &self.sample_box
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// One atom per row (`x,y,z`) after a `# seed=` comment line recording the box.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let b = &self.sample_box;
        writeln!(
            out,
            "# seed={} stream={} center={},{},{} size={},{},{}",
            self.seed, self.stream, b.center[0], b.center[1], b.center[2], b.size[0], b.size[1], b.size[2]
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "z"])?;
        for r in &self.positions {
            w.write_record([r.x.to_string(), r.y.to_string(), r.z.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let header = parse_header(first.trim())?;
        let mut rdr = csv::Reader::from_reader(input);
        let mut positions = Vec::new();
        for rec in rdr.deserialize::<[f64; 3]>() {
            let [x, y, z] = rec?;
            positions.push(Vector3::new(x, y, z));
        }
        let mut e = Self::from_positions(positions, header.sample_box, header.seed)?;
        e.stream = header.stream;
        Ok(e)
    }
}

struct Header {
    seed: u64,
    stream: u64,
    sample_box: SampleBox,
}

fn parse_header(line: &str) -> Result<Header> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Invalid("ensemble CSV must start with a `# seed=` line".into()))?;
    let mut seed = None;
    let mut stream = 0;
    let mut center = None;
    let mut size = None;
    let triple = |v: &str| -> Result<[f64; 3]> {
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Invalid(format!("bad number in ensemble header: {e}")))?;
        parts
            .try_into()
            .map_err(|_| Error::Invalid("ensemble header needs three components".into()))
    };
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("malformed header field `{field}`")))?;
        let bad = |e: std::num::ParseIntError| Error::Invalid(format!("bad {key}: {e}"));
        match key {
            "seed" => seed = Some(value.parse().map_err(bad)?),
            "stream" => stream = value.parse().map_err(bad)?,
            "center" => center = Some(triple(value)?),
            "size" => size = Some(triple(value)?),
            _ => return Err(Error::Invalid(format!("unknown header field `{key}`"))),
        }
    }
    match (seed, center, size) {
        (Some(seed), Some(center), Some(size)) => Ok(Header {
            seed,
            stream,
            sample_box: SampleBox::new(center, size)?,
        }),
        _ => Err(Error::Invalid("ensemble header needs seed, center and size".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> SampleBox {
        SampleBox::new([0.0, 0.0, 5.0], [1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn samples_stay_in_box() {
        let e = Ensemble::sample(unit_box(), 500, 7, 0).unwrap();
        assert_eq!(e.len(), 500);
        assert!(e.positions().iter().all(|r| unit_box().contains(r)));
    }

    #[test]
    fn sampling_is_reproducible_and_streams_differ() {
        let a = Ensemble::sample(unit_box(), 50, 11, 3).unwrap();
        let b = Ensemble::sample(unit_box(), 50, 11, 3).unwrap();
        let c = Ensemble::sample(unit_box(), 50, 11, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions(), c.positions());
    }

    #[test]
    fn sample_mean_is_box_center() {
        let e = Ensemble::sample(unit_box(), 20_000, 1, 0).unwrap();
        let mean: RealVec3 = e.positions().iter().sum::<RealVec3>() / e.len() as f64;
        assert!((mean - Vector3::new(0.0, 0.0, 5.0)).norm() < 0.03);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Ensemble::sample(unit_box(), 0, 1, 0).is_err());
        assert!(SampleBox::new([0.0; 3], [1.0, 0.0, 1.0]).is_err());
        let outside = vec![Vector3::new(0.0, 0.0, 100.0)];
        assert!(Ensemble::from_positions(outside, unit_box(), 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let e = Ensemble::sample(unit_box(), 40, 99, 2).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed=99 stream=2"));
        let back = Ensemble::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn csv_without_header_is_rejected() {
        let text = "x,y,z\n0,0,5\n";
        assert!(Ensemble::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn volume_weights_follow_height() {
        let metric = WeakFieldMetric::new(0.01, 5.0).unwrap();
        let e = Ensemble::sample(unit_box(), 10, 3, 0)
            .unwrap()
            .with_volume_weights(&metric)
            .unwrap();
        for (r, w) in e.positions().iter().zip(e.weights().unwrap()) {
            assert!((w - (1.0 - 0.01 * (r.z - 5.0)).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn translation_moves_box_and_atoms() {
        let e = Ensemble::sample(unit_box(), 5, 3, 0).unwrap();
        let shift = Vector3::new(1.0, -2.0, 0.0);
        let t = e.translated(&shift);
        assert!(t.positions().iter().all(|r| t.sample_box().contains(r)));
        assert_eq!(t.positions()[0], e.positions()[0] + shift);
    }
}
