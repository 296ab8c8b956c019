//! Model files and training CSVs.
//!
//! Model layout (all integers u64 LE, all floats f64 LE):
//! `GAE1`, input_dim, encoder layer count, decoder layer count, then
//! `(out, in, activation)` per layer, then per layer its weights row-major
//! followed by its bias, encoder layers first, and finally the input centre
//! vector and the input scale.

use super::{Activation, AutoencoderModel, Layer, SweepRow, TrainHistory};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GAE1";

impl AutoencoderModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.parameter_count() + self.input_dim() + 16));
        out.extend_from_slice(MAGIC);
        let int = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        let float = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
        int(&mut out, self.input_dim() as u64);
        int(&mut out, self.encoder.len() as u64);
        int(&mut out, self.decoder.len() as u64);
        for l in self.layers() {
            int(&mut out, l.out_dim() as u64);
            int(&mut out, l.in_dim() as u64);
            int(&mut out, l.activation.code());
        }
        for l in self.layers() {
            for r in 0..l.out_dim() {
                for c in 0..l.in_dim() {
                    float(&mut out, l.weight[(r, c)]);
                }
            }
            for &b in l.bias.iter() {
                float(&mut out, b);
            }
        }
        for &c in self.center.iter() {
            float(&mut out, c);
        }
        float(&mut out, self.scale);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Data("model file: bad magic (expected GAE1)".into()));
        }
        let input_dim = cur.int()?;
        let (ne, nd) = (cur.int()?, cur.int()?);
        if ne == 0 || nd == 0 || ne + nd > 1024 {
            return Err(Error::Data("model file: implausible layer counts".into()));
        }
        let mut shapes = Vec::with_capacity(ne + nd);
        for _ in 0..ne + nd {
            let (o, i) = (cur.int()?, cur.int()?);
            let act = Activation::from_code(cur.int()? as u64)?;
            shapes.push((o, i, act));
        }
        let mut layers = Vec::with_capacity(shapes.len());
        for (o, i, act) in shapes {
            let count = o
                .checked_mul(i)
                .ok_or_else(|| Error::Data("model file: layer too large".into()))?;
            let w = cur.floats(count)?;
            let b = cur.floats(o)?;
            layers.push(Layer::new(
                DMatrix::from_row_slice(o, i, &w),
                DVector::from_vec(b),
                act,
            )?);
        }
        let center = DVector::from_vec(cur.floats(input_dim)?);
        let scale = cur.floats(1)?[0];
        if cur.pos != bytes.len() {
            return Err(Error::Data("model file: trailing bytes".into()));
        }
        let decoder = layers.split_off(ne);
        let model = AutoencoderModel {
            encoder: layers,
            decoder,
            center,
            scale,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Data("model file: truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn int(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Data("model file: integer overflow".into()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Data("model file: truncated".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn csv_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{what}: {e}"))
}

fn parse_f64(what: &str, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Data(format!("{what}: bad number `{s}`")))
}

/// `epoch,train_mse,val_mse`, epochs counted from 1.
pub fn write_history_csv(h: &TrainHistory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_mse", "val_mse"])
        .expect("in-memory write");
    for (e, (t, v)) in h.train_mse.iter().zip(&h.val_mse).enumerate() {
        w.write_record([(e + 1).to_string(), t.to_string(), v.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn read_history_csv(text: &str) -> Result<TrainHistory> {
    let what = "history csv";
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()
        .map_err(|e| csv_err(what, e))?
        .iter()
        .ne(["epoch", "train_mse", "val_mse"])
    {
        return Err(Error::Data(format!("{what}: unexpected header")));
    }
    let mut h = TrainHistory::default();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(what, e))?;
        h.train_mse.push(parse_f64(what, &rec[1])?);
        h.val_mse.push(parse_f64(what, &rec[2])?);
    }
    Ok(h)
}

const SWEEP_HEADER: [&str; 5] = ["d", "train_mse", "val_mse", "epochs", "seed"];

pub fn write_sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.d.to_string(),
            r.train_mse.to_string(),
            r.val_mse.to_string(),
            r.epochs.to_string(),
            r.seed.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let what = "sweep csv";
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers().map_err(|e| csv_err(what, e))?.iter().ne(SWEEP_HEADER) {
        return Err(Error::Data(format!("{what}: unexpected header")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(what, e))?;
            let int = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::Data(format!("{what}: bad integer `{s}`")))
            };
            Ok(SweepRow {
                d: int(&rec[0])? as usize,
                train_mse: parse_f64(what, &rec[1])?,
                val_mse: parse_f64(what, &rec[2])?,
                epochs: int(&rec[3])? as usize,
                seed: int(&rec[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn model() -> AutoencoderModel {
        let mut m = AutoencoderModel::new(7, &[5, 3], 2, &mut rng::stream(1, "init", 0)).unwrap();
        m.center = DVector::from_fn(7, |i, _| i as f64 * 0.1);
        m.scale = 0.03;
        m
    }

    #[test]
    fn model_round_trip_is_exact() {
        let m = model();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"GAE1");
        assert_eq!(AutoencoderModel::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn weights_are_row_major() {
        let m = model();
        let bytes = m.to_bytes();
        let header = 4 + 8 * 3 + 8 * 3 * 6;
        let w01 = f64::from_le_bytes(bytes[header + 8..header + 16].try_into().unwrap());
        assert_eq!(w01, m.encoder[0].weight[(0, 1)]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = model().to_bytes();
        assert!(AutoencoderModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(AutoencoderModel::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(AutoencoderModel::from_bytes(&extra).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.gae");
        model().save(&p).unwrap();
        assert_eq!(AutoencoderModel::load(&p).unwrap(), model());
    }

    #[test]
    fn history_and_sweep_csv_round_trip() {
        let h = TrainHistory {
            train_mse: vec![1e-3, 5e-4],
            val_mse: vec![2e-3, 6e-4],
            ..TrainHistory::default()
        };
        let back = read_history_csv(&write_history_csv(&h)).unwrap();
        assert_eq!(back.train_mse, h.train_mse);
        assert_eq!(back.val_mse, h.val_mse);
        let rows = vec![SweepRow {
            d: 3,
            train_mse: 1.5e-4,
            val_mse: 2.5e-4,
            epochs: 500,
            seed: 9,
        }];
        assert_eq!(read_sweep_csv(&write_sweep_csv(&rows)).unwrap(), rows);
    }
}
