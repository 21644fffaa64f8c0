//! NPY v1.0 arrays (little-endian `f32`, `f64`, `u8`, C order).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};
use crate::map::{DenseMap, MapKind, NestedSampleStack, Origin, SampleStack, Shape};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
/// Magic, version and the 2-byte header length.
const PREAMBLE: usize = 10;
const ALIGNMENT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
            Dtype::U8 => "|u1",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            "u8" => Ok(Dtype::U8),
            other => Err(UqError::config(format!("unknown dtype `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

impl NpyData {
    pub fn dtype(&self) -> Dtype {
        match self {
            NpyData::F32(_) => Dtype::F32,
            NpyData::F64(_) => Dtype::F64,
            NpyData::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NpyData::F32(v) => v.len(),
            NpyData::F64(v) => v.len(),
            NpyData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to `f64`; `u8` values are divided by 255 when
    /// `scale_u8` is set.
    pub fn to_f64(&self, scale_u8: bool) -> Vec<f64> {
        match self {
            NpyData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            NpyData::F64(v) => v.clone(),
            NpyData::U8(v) if scale_u8 => v.iter().map(|&x| f64::from(x) / 255.0).collect(),
            NpyData::U8(v) => v.iter().map(|&x| f64::from(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(UqError::shape(format!(
                "{} values do not fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(NpyArray { shape, data })
    }

    fn header(&self) -> Vec<u8> {
        let dims = match self.shape.as_slice() {
            [d] => format!("({d},)"),
            s => format!(
                "({})",
                s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
            ),
        };
        let mut header = format!(
            "{{'descr': '{}', 'fortran_order': False, 'shape': {dims}, }}",
            self.data.dtype().descr()
        )
        .into_bytes();
        let total = PREAMBLE + header.len() + 1;
        let pad = (ALIGNMENT - total % ALIGNMENT) % ALIGNMENT;
        header.extend(std::iter::repeat_n(b' ', pad));
        header.push(b'\n');
        header
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + self.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(&header);
        match &self.data {
            NpyData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NpyData::U8(v) => out.extend_from_slice(v),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE {
            return Err(UqError::format(bytes.len(), "file shorter than the NPY preamble"));
        }
        if &bytes[..6] != MAGIC {
            return Err(UqError::format(0, "bad magic, not an NPY file"));
        }
        if bytes[6..8] != [1, 0] {
            return Err(UqError::format(
                6,
                format!("unsupported NPY version {}.{}", bytes[6], bytes[7]),
            ));
        }
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let data_start = PREAMBLE + header_len;
        if bytes.len() < data_start {
            return Err(UqError::format(bytes.len(), "truncated header"));
        }
        let header = std::str::from_utf8(&bytes[PREAMBLE..data_start])
            .map_err(|e| UqError::format(PREAMBLE + e.valid_up_to(), "header is not ASCII"))?;
        let (dtype, shape) = parse_header(header)?;
        let n: usize = shape.iter().product();
        let payload = &bytes[data_start..];
        let expected = n * dtype.size();
        if payload.len() != expected {
            return Err(UqError::format(
                data_start + payload.len().min(expected),
                format!(
                    "payload holds {} bytes but shape {shape:?} needs {expected}",
                    payload.len()
                ),
            ));
        }
        let data = match dtype {
            Dtype::F32 => NpyData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => NpyData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => NpyData::U8(payload.to_vec()),
        };
        Ok(NpyArray { shape, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Locates `'key':` in the header dict and returns the offset just past it.
fn value_after(header: &str, key: &str) -> Result<usize> {
    let pat = format!("'{key}':");
    header
        .find(&pat)
        .map(|i| i + pat.len())
        .ok_or_else(|| UqError::format(PREAMBLE, format!("header lacks `{key}`")))
}

fn parse_header(header: &str) -> Result<(Dtype, Vec<usize>)> {
    let at = |i: usize| PREAMBLE + i;

    let d = value_after(header, "descr")?;
    let rest = header[d..].trim_start();
    let d0 = d + (header[d..].len() - rest.len());
    let descr = rest
        .strip_prefix('\'')
        .and_then(|r| r.split('\'').next())
        .ok_or_else(|| UqError::format(at(d0), "malformed descr"))?;
    let dtype = match descr {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        "|u1" | "<u1" | ">u1" => Dtype::U8,
        ">f4" | ">f8" => {
            return Err(UqError::format(at(d0), format!("big-endian dtype {descr} is not supported")))
        }
        other => {
            return Err(UqError::format(at(d0), format!("unsupported dtype {other}")));
        }
    };

    let f = value_after(header, "fortran_order")?;
    let rest = header[f..].trim_start();
    let f0 = f + (header[f..].len() - rest.len());
    if rest.starts_with("True") {
        return Err(UqError::format(at(f0), "fortran_order=True is not supported"));
    }
    if !rest.starts_with("False") {
        return Err(UqError::format(at(f0), "malformed fortran_order"));
    }

    let s = value_after(header, "shape")?;
    let rest = header[s..].trim_start();
    let s0 = s + (header[s..].len() - rest.len());
    let inner = rest
        .strip_prefix('(')
        .and_then(|r| r.split(')').next())
        .ok_or_else(|| UqError::format(at(s0), "malformed shape"))?;
    let shape = inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| UqError::format(at(s0), format!("bad dimension `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dtype, shape))
}

/// Decoded array contents, dispatched on rank.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayContent {
    /// `(H, W)` or `(H, W, C)`.
    Map(DenseMap),
    /// `(T, H, W, C)`.
    Stack(SampleStack),
    /// `(M, S, H, W, C)`.
    Nested(NestedSampleStack),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadOptions {
    pub kind: MapKind,
    /// Divide `u8` payloads by 255.
    pub scale_u8: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions {
            kind: MapKind::Real,
            scale_u8: false,
        }
    }
}

fn split_maps(values: Vec<f64>, count: usize, shape: Shape, kind: MapKind) -> Result<Vec<DenseMap>> {
    values
        .chunks(shape.len().max(1))
        .take(count)
        .map(|c| DenseMap::new(shape, c.to_vec(), kind))
        .collect()
}

/// Interprets an array as a map, stack or nested stack.
pub fn array_content(array: &NpyArray, opts: ReadOptions) -> Result<ArrayContent> {
    let values = array.data.to_f64(opts.scale_u8);
    let s = &array.shape;
    match s.len() {
        2 => Ok(ArrayContent::Map(DenseMap::new(
            Shape::new(s[0], s[1], 1),
            values,
            opts.kind,
        )?)),
        3 => Ok(ArrayContent::Map(DenseMap::new(
            Shape::new(s[0], s[1], s[2]),
            values,
            opts.kind,
        )?)),
        4 => {
            let shape = Shape::new(s[1], s[2], s[3]);
            let maps = split_maps(values, s[0], shape, opts.kind)?;
            Ok(ArrayContent::Stack(SampleStack::new(maps, Origin::External, 0)?))
        }
        5 => {
            let shape = Shape::new(s[2], s[3], s[4]);
            let maps = split_maps(values, s[0] * s[1], shape, opts.kind)?;
            let groups = maps.chunks(s[1].max(1)).map(<[DenseMap]>::to_vec).collect();
            Ok(ArrayContent::Nested(NestedSampleStack::new(groups)?))
        }
        r => Err(UqError::shape(format!("arrays of rank {r} are not supported"))),
    }
}

pub fn read_array(path: impl AsRef<Path>, opts: ReadOptions) -> Result<ArrayContent> {
    array_content(&NpyArray::read(path)?, opts)
}

pub fn map_to_array(map: &DenseMap) -> NpyArray {
    let s = map.shape();
    NpyArray {
        shape: vec![s.height, s.width, s.channels],
        data: NpyData::F64(map.values().to_vec()),
    }
}

pub fn stack_to_array(stack: &SampleStack) -> NpyArray {
    let s = stack.shape();
    NpyArray {
        shape: vec![stack.len(), s.height, s.width, s.channels],
        data: NpyData::F64(stack.samples().iter().flat_map(|m| m.values().iter().copied()).collect()),
    }
}

pub fn nested_to_array(nested: &NestedSampleStack) -> NpyArray {
    let s = nested.shape();
    NpyArray {
        shape: vec![
            nested.parameter_samples(),
            nested.latent_samples(),
            s.height,
            s.width,
            s.channels,
        ],
        data: NpyData::F64(
            nested
                .groups()
                .iter()
                .flatten()
                .flat_map(|m| m.values().iter().copied())
                .collect(),
        ),
    }
}

/// Writes a map as an `(H, W, C)` `f64` array.
pub fn write_map(map: &DenseMap, path: impl AsRef<Path>) -> Result<()> {
    map_to_array(map).write(path)
}

/// Writes a stack as a `(T, H, W, C)` `f64` array.
pub fn write_stack(stack: &SampleStack, path: impl AsRef<Path>) -> Result<()> {
    stack_to_array(stack).write(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned_and_roundtrips() {
        for shape in [vec![3], vec![2, 3], vec![1, 2, 3, 4], vec![0, 5]] {
            let n = shape.iter().product();
            let a = NpyArray::new(shape.clone(), NpyData::F64((0..n).map(|i| i as f64 * 0.1).collect()))
                .unwrap();
            let bytes = a.to_bytes();
            let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            assert_eq!((PREAMBLE + header_len) % 64, 0);
            assert_eq!(bytes[PREAMBLE + header_len - 1], b'\n');
            assert_eq!(NpyArray::from_bytes(&bytes).unwrap(), a);
        }
    }

    #[test]
    fn reference_header_bytes() {
        let a = NpyArray::new(vec![2, 2], NpyData::U8(vec![1, 2, 3, 4])).unwrap();
        let bytes = a.to_bytes();
        let text = std::str::from_utf8(&bytes[10..128]).unwrap();
        assert!(text.starts_with("{'descr': '|u1', 'fortran_order': False, 'shape': (2, 2), }"));
        assert!(text.ends_with(" \n"));
        assert_eq!(&bytes[128..], &[1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_inputs_with_offsets() {
        let good = NpyArray::new(vec![2], NpyData::F64(vec![1.0, 2.0])).unwrap().to_bytes();
        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(NpyArray::from_bytes(&bad), Err(UqError::Format { offset: 0, .. })));

        let truncated = &good[..good.len() - 3];
        assert!(matches!(NpyArray::from_bytes(truncated), Err(UqError::Format { .. })));

        let mut fo = good.clone();
        let pos = fo.windows(5).position(|w| w == b"False").unwrap();
        fo[pos..pos + 5].copy_from_slice(b"True ");
        match NpyArray::from_bytes(&fo) {
            Err(UqError::Format { offset, message }) => {
                assert_eq!(offset, pos);
                assert!(message.contains("fortran"));
            }
            other => panic!("{other:?}"),
        }

        let mut be = good.clone();
        let pos = be.windows(3).position(|w| w == b"<f8").unwrap();
        be[pos] = b'>';
        assert!(matches!(NpyArray::from_bytes(&be), Err(UqError::Format { offset, .. }) if offset == pos - 1));
        let mut i8 = good;
        i8[pos..pos + 3].copy_from_slice(b"<i8");
        assert!(NpyArray::from_bytes(&i8).is_err());
    }

    #[test]
    fn u8_stack_fixture() {
        // hand-built bytes: (3, 2, 2, 1) u8 with 0 / 255 values
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"\x93NUMPY\x01\x00");
        let mut header = b"{'descr': '|u1', 'fortran_order': False, 'shape': (3, 2, 2, 1), }".to_vec();
        while !(10 + header.len() + 1).is_multiple_of(64) {
            header.push(b' ');
        }
        header.push(b'\n');
        bytes.extend_from_slice(&(header.len() as u16).to_le_bytes());
        bytes.extend_from_slice(&header);
        let payload = [0u8, 255, 255, 0, 255, 255, 0, 0, 0, 0, 0, 255];
        bytes.extend_from_slice(&payload);
        let arr = NpyArray::from_bytes(&bytes).unwrap();
        let opts = ReadOptions {
            kind: MapKind::Probability,
            scale_u8: true,
        };
        let ArrayContent::Stack(stack) = array_content(&arr, opts).unwrap() else {
            panic!("expected a stack");
        };
        assert_eq!(stack.len(), 3);
        assert_eq!(stack.kind(), MapKind::Probability);
        assert_eq!(stack.samples()[0].values(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(stack.samples()[2].values(), &[0.0, 0.0, 0.0, 1.0]);
        // without scaling the values are not probabilities
        assert!(array_content(&arr, ReadOptions { scale_u8: false, ..opts }).is_err());
    }

    #[test]
    fn rank_dispatch() {
        let map = DenseMap::from_vec(2, 3, (0..6).map(f64::from).collect(), MapKind::Real).unwrap();
        let arr = NpyArray::new(vec![2, 3], NpyData::F64(map.values().to_vec())).unwrap();
        assert_eq!(array_content(&arr, ReadOptions::default()).unwrap(), ArrayContent::Map(map.clone()));
        let nested = NestedSampleStack::new(vec![vec![map.clone(), map.clone()]; 3]).unwrap();
        let back = array_content(&nested_to_array(&nested), ReadOptions::default()).unwrap();
        assert_eq!(back, ArrayContent::Nested(nested));
        let one = NpyArray::new(vec![4], NpyData::F32(vec![0.0; 4])).unwrap();
        assert!(array_content(&one, ReadOptions::default()).is_err());
    }
}
