//! WSOCKPT1: a self-describing checkpoint of a trained model.
//!
//! Layout, all little-endian. Strings are a u16 byte length then UTF-8.
//!
//! | field | encoding |
//! |-------|----------|
//! | magic | `WSOCKPT1` (8 bytes) |
//! | version | u16 = 1 |
//! | variant name | string |
//! | input mode | u8: 0 full range, 1 fixed windows, 2 WSO |
//! | window function | u8: 0 linear, 1 sigmoid, 255 none |
//! | settings | u32 count, then (level f64, width f64) each |
//! | display range | u f64, eps f64 |
//! | DeskNet input channels | u32 |
//! | selected epoch | u32 |
//! | validation loss | f64 |
//! | Adam step count | u64 |
//! | sections | u32 count, then (name string, u64 length, f64 values) each |
//!
//! Sections hold every parameter group under its own name, followed by
//! `adam.m.<group>` and `adam.v.<group>` for each group.

use std::path::Path;

use super::trainer::TrainedModel;
use super::variant::{ExperimentVariant, InputMode, VARIANT_COUNT};
use crate::data::Task;
use crate::error::{Error, Result};
use crate::nn::{DeskNet, Model};
use crate::optim::AdamState;
use crate::windowing::{DisplayRange, WindowFnKind, WindowSetting};
use crate::wso::{WsoChannel, WsoLayer};

pub const MAGIC: &[u8; 8] = b"WSOCKPT1";
pub const VERSION: u16 = 1;
const WHAT: &str = "WSOCKPT1 checkpoint";

struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.bytes(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.bytes(s.as_bytes());
    }
    fn section(&mut self, name: &str, values: &[f64]) {
        self.str(name);
        self.u64(values.len() as u64);
        for &v in values {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Truncated {
            what: WHAT,
            detail: format!("need {n} bytes at offset {}, file has {}", self.pos, self.buf.len()),
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| malformed(format!("string: {e}")))
    }
    fn section(&mut self) -> Result<(String, Vec<f64>)> {
        let name = self.str()?;
        let n = self.u64()?;
        if n > (self.buf.len() - self.pos) as u64 / 8 {
            return Err(Error::Truncated { what: WHAT, detail: format!("section {name} declares {n} values") });
        }
        let values = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok((name, values))
    }
}

fn malformed(detail: String) -> Error {
    Error::Malformed { what: WHAT, detail }
}

pub fn encode_checkpoint(t: &TrainedModel) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.str(t.variant.name());
    let (mode, kind, settings): (u8, u8, &[WindowSetting]) = match t.variant.input() {
        InputMode::FullRange => (0, 255, &[]),
        InputMode::FixedWindow(s) => (1, 255, s),
        InputMode::Wso { kind, init } => (
            2,
            match kind {
                WindowFnKind::Linear => 0,
                WindowFnKind::Sigmoid => 1,
            },
            init,
        ),
    };
    w.u8(mode);
    w.u8(kind);
    w.u32(settings.len() as u32);
    for s in settings {
        w.f64(s.level());
        w.f64(s.width());
    }
    let range = t.model.wso.as_ref().map_or_else(DisplayRange::default, |l| l.range());
    w.f64(range.u());
    w.f64(range.eps());
    w.u32(t.model.net.in_channels() as u32);
    w.u32(t.selected_epoch as u32);
    w.f64(t.val_loss);
    w.u64(t.optimizer.t);
    let groups = t.model.param_groups();
    w.u32(3 * groups.len() as u32);
    for (name, values) in &groups {
        w.section(name, values);
    }
    for (i, (name, _)) in groups.iter().enumerate() {
        w.section(&format!("adam.m.{name}"), &t.optimizer.m[i]);
        w.section(&format!("adam.v.{name}"), &t.optimizer.v[i]);
    }
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < MAGIC.len() {
        return Err(Error::Truncated { what: WHAT, detail: format!("{} bytes", bytes.len()) });
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic { what: WHAT, expected: "WSOCKPT1" });
    }
    let mut r = Reader { buf: bytes, pos: MAGIC.len() };
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion { what: WHAT, version });
    }
    let name = r.str()?;
    let index = ExperimentVariant::parse(&name, Task::Hemorrhage)
        .ok()
        .filter(|v| v.name() == name)
        .map(|v| v.index())
        .filter(|&i| i < VARIANT_COUNT)
        .ok_or_else(|| malformed(format!("unknown variant {name:?}")))?;
    let mode = r.u8()?;
    let kind = match r.u8()? {
        0 => Some(WindowFnKind::Linear),
        1 => Some(WindowFnKind::Sigmoid),
        255 => None,
        k => return Err(malformed(format!("window function tag {k}"))),
    };
    let n_settings = r.u32()? as usize;
    let mut settings = Vec::with_capacity(n_settings.min(64));
    for _ in 0..n_settings {
        let (level, width) = (r.f64()?, r.f64()?);
        settings.push(WindowSetting::new(level, width).map_err(|e| malformed(e.to_string()))?);
    }
    let input = match (mode, kind) {
        (0, None) => InputMode::FullRange,
        (1, None) => InputMode::FixedWindow(settings),
        (2, Some(kind)) => InputMode::Wso { kind, init: settings },
        _ => return Err(malformed(format!("input mode {mode} with window function {kind:?}"))),
    };
    let variant = ExperimentVariant::with_input(index, input)?;
    let range = DisplayRange::new(r.f64()?, r.f64()?).map_err(|e| malformed(e.to_string()))?;
    let in_channels = r.u32()? as usize;
    let selected_epoch = r.u32()? as usize;
    let val_loss = r.f64()?;
    let t = r.u64()?;
    let n_sections = r.u32()? as usize;
    let mut sections = Vec::with_capacity(n_sections.min(64));
    for _ in 0..n_sections {
        sections.push(r.section()?);
    }
    if r.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let mut take = |name: &str| -> Result<Vec<f64>> {
        let i =
            sections.iter().position(|(n, _)| n == name).ok_or_else(|| malformed(format!("missing section {name}")))?;
        Ok(sections.swap_remove(i).1)
    };

    if in_channels != variant.cnn_channels() {
        return Err(malformed(format!("{in_channels} CNN channels for {} settings", variant.cnn_channels())));
    }
    let mut net = DeskNet::zeros(in_channels);
    let wso = match variant.input() {
        InputMode::Wso { kind, .. } => {
            let (w, b) = (take("wso.w")?, take("wso.b")?);
            if w.len() != in_channels || b.len() != in_channels {
                return Err(malformed(format!("WSO sections of length {} and {}", w.len(), b.len())));
            }
            let ch: Vec<WsoChannel> = w.iter().zip(&b).map(|(&w, &b)| WsoChannel { w, b }).collect();
            Some(WsoLayer::from_channels(*kind, range, &ch).map_err(|e| malformed(e.to_string()))?)
        }
        _ => None,
    };
    for name in crate::nn::DESKNET_GROUPS {
        net.set_group(name, &take(name)?).map_err(|e| malformed(e.to_string()))?;
    }
    let model = Model::new(wso, net)?;
    let names = model.group_names();
    let mut optimizer = AdamState { m: Vec::new(), v: Vec::new(), t };
    for (name, (_, p)) in names.iter().zip(model.param_groups()) {
        let (m, v) = (take(&format!("adam.m.{name}"))?, take(&format!("adam.v.{name}"))?);
        if m.len() != p.len() || v.len() != p.len() {
            return Err(malformed(format!("Adam moments for {name} have the wrong length")));
        }
        optimizer.m.push(m);
        optimizer.v.push(v);
    }
    if let Some((name, _)) = sections.first() {
        return Err(malformed(format!("unexpected section {name}")));
    }
    Ok(TrainedModel { variant, model, optimizer, selected_epoch, val_loss })
}

pub fn save_checkpoint(path: impl AsRef<Path>, t: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(t)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    decode_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::build_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trained(index: usize) -> TrainedModel {
        let variant = ExperimentVariant::new(index, Task::Stone).unwrap();
        let model =
            build_model(&variant, DisplayRange::default(), &mut ChaCha8Rng::seed_from_u64(index as u64)).unwrap();
        let sizes: Vec<usize> = model.param_groups().iter().map(|(_, p)| p.len()).collect();
        let mut optimizer = AdamState::new(&sizes);
        optimizer.t = 7;
        for (i, m) in optimizer.m.iter_mut().enumerate() {
            m.iter_mut().enumerate().for_each(|(j, x)| *x = (i * 1000 + j) as f64 * 1e-3);
        }
        optimizer.v[0][0] = 0.5;
        TrainedModel { variant, model, optimizer, selected_epoch: 13, val_loss: 0.4321 }
    }

    #[test]
    fn round_trip_every_variant() {
        for i in 0..VARIANT_COUNT {
            let t = trained(i);
            let back = decode_checkpoint(&encode_checkpoint(&t)).unwrap();
            assert_eq!(back.variant, t.variant);
            assert_eq!(back.model.param_groups(), t.model.param_groups());
            assert_eq!(back.model.wso, t.model.wso);
            assert_eq!(back.optimizer, t.optimizer);
            assert_eq!((back.selected_epoch, back.val_loss), (13, 0.4321));
            assert_eq!(encode_checkpoint(&back), encode_checkpoint(&t));
        }
    }

    #[test]
    fn header_bytes() {
        let b = encode_checkpoint(&trained(9));
        assert_eq!(&b[..8], b"WSOCKPT1");
        assert_eq!(&b[8..10], &[1, 0]);
        assert_eq!(&b[10..12], &[17, 0]);
        assert_eq!(&b[12..29], b"wso_sigmoid_s1_s2");
        assert_eq!(&b[29..31], &[2, 1]);
    }

    #[test]
    fn corrupt_inputs_are_distinguished() {
        let good = encode_checkpoint(&trained(4));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::UnsupportedVersion { version: 9, .. })));
        for cut in [3, 20, good.len() / 2, good.len() - 1] {
            assert!(matches!(decode_checkpoint(&good[..cut]), Err(Error::Truncated { .. })), "cut {cut}");
        }
        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Malformed { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let t = trained(2);
        save_checkpoint(&p, &t).unwrap();
        assert_eq!(load_checkpoint(&p).unwrap().model.param_groups(), t.model.param_groups());
        assert!(load_checkpoint(dir.path().join("missing")).unwrap_err().is_io());
    }
}
