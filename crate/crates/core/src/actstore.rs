// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reader, writer and validator for `ACTV0001` activation dumps.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "ACTV0001"            8 ASCII bytes
//! header_len            u32
//! header                header_len bytes of UTF-8 JSON (StoreHeader)
//! payload               n_layers blocks, each n_examples x hidden_dim f32, row-major
//! ```
//!
//! For the residual site, block `l` holds the input to layer `l`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::designer::Manifest;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"ACTV0001";
const MAGIC_FAMILY: &[u8; 4] = b"ACTV";
const DTYPE: &str = "f32";
/// Cap on individually listed non-finite coordinates in a report.
const MAX_LISTED_NON_FINITE: usize = 1000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bad magic: expected \"ACTV0001\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported store version {0:?}")]
    UnsupportedVersion(String),
    #[error("truncated store: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing bytes: expected {expected} bytes, found {actual}")]
    Trailing { expected: usize, actual: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("layer {layer} out of range for a store with {n_layers} layers")]
    LayerOutOfRange { layer: usize, n_layers: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One of the three probed tensors per transformer layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteId {
    /// Residual stream entering the layer.
    ResidIn,
    /// Attention block output added to the stream.
    AttnOut,
    /// Feed-forward block output added to the stream.
    FfnOut,
}

impl SiteId {
    pub const ALL: [SiteId; 3] = [SiteId::ResidIn, SiteId::AttnOut, SiteId::FfnOut];

    pub fn as_str(self) -> &'static str {
        match self {
            SiteId::ResidIn => "resid_in",
            SiteId::AttnOut => "attn_out",
            SiteId::FfnOut => "ffn_out",
        }
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SiteId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resid_in" => Ok(SiteId::ResidIn),
            "attn_out" => Ok(SiteId::AttnOut),
            "ffn_out" => Ok(SiteId::FfnOut),
            other => Err(StoreError::Header(format!(
                "unknown site {other:?} (expected resid_in, attn_out or ffn_out)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreHeader {
    pub model_id: String,
    pub site: SiteId,
    pub n_layers: usize,
    pub n_examples: usize,
    pub hidden_dim: usize,
    pub dtype: String,
    pub example_ids: Vec<String>,
}

impl StoreHeader {
    pub fn new(
        model_id: impl Into<String>,
        site: SiteId,
        n_layers: usize,
        hidden_dim: usize,
        example_ids: Vec<String>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            site,
            n_layers,
            n_examples: example_ids.len(),
            hidden_dim,
            dtype: DTYPE.to_string(),
            example_ids,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.n_layers * self.n_examples * self.hidden_dim * 4
    }

    fn check(&self) -> Result<(), StoreError> {
        if self.dtype != DTYPE {
            return Err(StoreError::Header(format!(
                "dtype {:?} unsupported, only \"f32\"",
                self.dtype
            )));
        }
        if self.n_layers == 0 {
            return Err(StoreError::Header("n_layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(StoreError::Header("hidden_dim must be at least 1".into()));
        }
        if self.example_ids.len() != self.n_examples {
            return Err(StoreError::Header(format!(
                "n_examples is {} but {} example ids are listed",
                self.n_examples,
                self.example_ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.example_ids.len());
        for id in &self.example_ids {
            if !seen.insert(id.as_str()) {
                return Err(StoreError::Header(format!("duplicate example id {id:?}")));
            }
        }
        Ok(())
    }
}

/// Per-layer activation matrices for one (experiment, site).
#[derive(Debug, Clone)]
pub struct ActivationStore {
    header: StoreHeader,
    data: Vec<f32>,
}

impl ActivationStore {
    /// `data` is the concatenation of the layer blocks in layer order.
    pub fn new(header: StoreHeader, data: Vec<f32>) -> Result<Self, StoreError> {
        header.check()?;
        let expected = header.n_layers * header.n_examples * header.hidden_dim;
        if data.len() != expected {
            return Err(StoreError::Shape(format!(
                "header implies {expected} values ({} layers x {} examples x {} dims), data has {}",
                header.n_layers,
                header.n_examples,
                header.hidden_dim,
                data.len()
            )));
        }
        Ok(Self { header, data })
    }

    /// Builds a store from one `n_examples x hidden_dim` block per layer.
    pub fn from_layers(header: StoreHeader, layers: &[Matrix<f32>]) -> Result<Self, StoreError> {
        if layers.len() != header.n_layers {
            return Err(StoreError::Shape(format!(
                "{} layer blocks for n_layers = {}",
                layers.len(),
                header.n_layers
            )));
        }
        let mut data = Vec::with_capacity(header.n_layers * header.n_examples * header.hidden_dim);
        for (l, m) in layers.iter().enumerate() {
            if m.rows() != header.n_examples || m.cols() != header.hidden_dim {
                return Err(StoreError::Shape(format!(
                    "layer {l} block is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    header.n_examples,
                    header.hidden_dim
                )));
            }
            data.extend_from_slice(m.as_slice());
        }
        Self::new(header, data)
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn n_layers(&self) -> usize {
        self.header.n_layers
    }

    pub fn n_examples(&self) -> usize {
        self.header.n_examples
    }

    pub fn hidden_dim(&self) -> usize {
        self.header.hidden_dim
    }

    pub fn example_ids(&self) -> &[String] {
        &self.header.example_ids
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    fn block_len(&self) -> usize {
        self.header.n_examples * self.header.hidden_dim
    }

    /// Borrowed row-major block for `layer`.
    pub fn layer_slice(&self, layer: usize) -> Result<&[f32], StoreError> {
        if layer >= self.header.n_layers {
            return Err(StoreError::LayerOutOfRange {
                layer,
                n_layers: self.header.n_layers,
            });
        }
        let b = self.block_len();
        Ok(&self.data[layer * b..(layer + 1) * b])
    }

    /// The `n_examples x hidden_dim` block for `layer`, rows in `example_ids` order.
    pub fn layer_matrix<T: Scalar>(&self, layer: usize) -> Result<Matrix<T>, StoreError> {
        let block = self.layer_slice(layer)?;
        let values = block.iter().map(|&v| T::of(f64::from(v))).collect();
        Matrix::from_vec(self.header.n_examples, self.header.hidden_dim, values)
            .map_err(|e| StoreError::Shape(e.to_string()))
    }

    /// Bitwise equality of headers and payloads (NaN payloads compare by bits).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.header == other.header
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC_FAMILY {
            return Err(StoreError::BadMagic {
                found: bytes[..bytes.len().min(8)].to_vec(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(StoreError::UnsupportedVersion(
                String::from_utf8_lossy(&bytes[4..8]).into_owned(),
            ));
        }
        if bytes.len() < 12 {
            return Err(StoreError::Truncated {
                expected: 12,
                actual: bytes.len(),
            });
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12 + header_len;
        if bytes.len() < header_end {
            return Err(StoreError::Truncated {
                expected: header_end,
                actual: bytes.len(),
            });
        }
        let header: StoreHeader =
            serde_json::from_slice(&bytes[12..header_end]).map_err(|e| StoreError::Header(e.to_string()))?;
        header.check()?;
        let expected = header_end + header.payload_len();
        if bytes.len() < expected {
            return Err(StoreError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(StoreError::Trailing {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes[header_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::new(header, data)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), StoreError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn write_store(store: &ActivationStore) -> Vec<u8> {
    store.to_bytes()
}

pub fn read_store(bytes: &[u8]) -> Result<ActivationStore, StoreError> {
    ActivationStore::from_bytes(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonFinite {
    pub example: usize,
    pub example_id: String,
    pub layer: usize,
    pub dim: usize,
}

/// Outcome of checking a store against a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub site: SiteId,
    /// Manifest ids absent from the store.
    pub missing_in_store: Vec<String>,
    /// Store ids absent from the manifest.
    pub extra_in_store: Vec<String>,
    /// For each manifest example (in manifest order), its row in the store.
    /// Present only when the id sets match.
    pub alignment: Option<Vec<usize>>,
    pub non_finite_total: usize,
    /// First non-finite coordinates, with example indices in store order.
    pub non_finite: Vec<NonFinite>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn validate(store: &ActivationStore, manifest: &Manifest) -> ValidationReport {
    let store_rows: HashMap<&str, usize> = store
        .example_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let manifest_ids: HashSet<&str> = manifest.examples.iter().map(|e| e.id.as_str()).collect();

    let missing_in_store: Vec<String> = manifest
        .examples
        .iter()
        .filter(|e| !store_rows.contains_key(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    let extra_in_store: Vec<String> = store
        .example_ids()
        .iter()
        .filter(|id| !manifest_ids.contains(id.as_str()))
        .cloned()
        .collect();
    let alignment = (missing_in_store.is_empty() && extra_in_store.is_empty())
        .then(|| manifest.examples.iter().map(|e| store_rows[e.id.as_str()]).collect());

    let mut non_finite = Vec::new();
    let mut non_finite_total = 0;
    let dim = store.hidden_dim();
    for layer in 0..store.n_layers() {
        let block = store.layer_slice(layer).expect("layer in range");
        for (flat, v) in block.iter().enumerate() {
            if !v.is_finite() {
                non_finite_total += 1;
                if non_finite.len() < MAX_LISTED_NON_FINITE {
                    let example = flat / dim;
                    non_finite.push(NonFinite {
                        example,
                        example_id: store.example_ids()[example].clone(),
                        layer,
                        dim: flat % dim,
                    });
                }
            }
        }
    }

    ValidationReport {
        ok: alignment.is_some() && non_finite_total == 0,
        site: store.header().site,
        missing_in_store,
        extra_in_store,
        alignment,
        non_finite_total,
        non_finite,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designer::{ExampleRecord, Manifest};

    fn fixture() -> ActivationStore {
        let header = StoreHeader::new("fixture", SiteId::AttnOut, 2, 3, vec!["e0".into()]);
        ActivationStore::new(header, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    fn manifest(ids: &[&str]) -> Manifest {
        Manifest {
            experiment_id: "t".into(),
            template_id: "t".into(),
            examples: ids.iter().map(|id| ExampleRecord::bare(id, "A cat")).collect(),
        }
    }

    #[test]
    fn payload_is_exactly_the_size_formula() {
        let s = fixture();
        let bytes = write_store(&s);
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(&bytes[..8], b"ACTV0001");
        assert_eq!(bytes.len() - 12 - header_len, 24);
    }

    #[test]
    fn round_trip_keeps_header_and_bits() {
        let s = fixture();
        let back = read_store(&write_store(&s)).unwrap();
        assert!(back.bit_eq(&s));
        assert_eq!(back.header(), s.header());
    }

    #[test]
    fn empty_store_is_valid() {
        let header = StoreHeader::new("m", SiteId::ResidIn, 3, 4, vec![]);
        let s = ActivationStore::new(header, vec![]).unwrap();
        let bytes = write_store(&s);
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 12 + header_len);
        assert!(read_store(&bytes).unwrap().bit_eq(&s));
    }

    #[test]
    fn corrupted_first_byte_is_bad_magic() {
        let mut bytes = write_store(&fixture());
        bytes[0] = b'X';
        assert!(matches!(read_store(&bytes), Err(StoreError::BadMagic { .. })));
    }

    #[test]
    fn other_version_is_reported() {
        let mut bytes = write_store(&fixture());
        bytes[7] = b'2';
        assert!(matches!(
            read_store(&bytes),
            Err(StoreError::UnsupportedVersion(v)) if v == "0002"
        ));
    }

    #[test]
    fn truncation_names_expected_size() {
        let bytes = write_store(&fixture());
        let full = bytes.len();
        let err = read_store(&bytes[..full - 4]).unwrap_err();
        match err {
            StoreError::Truncated { expected, actual } => {
                assert_eq!(expected, full);
                assert_eq!(actual, full - 4);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_msg(&bytes[..full - 4]).contains(&full.to_string()));
    }

    fn err_msg(b: &[u8]) -> String {
        read_store(b).unwrap_err().to_string()
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = write_store(&fixture());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(read_store(&bytes), Err(StoreError::Trailing { .. })));
    }

    #[test]
    fn header_payload_mismatch_rejected() {
        let header = StoreHeader::new("m", SiteId::ResidIn, 2, 3, vec!["a".into()]);
        assert!(matches!(
            ActivationStore::new(header, vec![0.0; 5]),
            Err(StoreError::Shape(_))
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let header = StoreHeader::new("m", SiteId::ResidIn, 1, 1, vec!["a".into(), "a".into()]);
        assert!(matches!(
            ActivationStore::new(header, vec![0.0; 2]),
            Err(StoreError::Header(_))
        ));
    }

    #[test]
    fn layer_matrix_reads_blocks() {
        let s = fixture();
        let m0 = s.layer_matrix::<f64>(0).unwrap();
        assert_eq!(m0.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(s.layer_matrix::<f32>(1).unwrap().row(0), &[4.0, 5.0, 6.0]);
        assert!(matches!(
            s.layer_matrix::<f64>(2),
            Err(StoreError::LayerOutOfRange { layer: 2, n_layers: 2 })
        ));
        assert_eq!(s.layer_matrix::<f32>(0).unwrap(), s.layer_matrix::<f32>(0).unwrap());
    }

    #[test]
    fn site_names_are_stable() {
        for site in SiteId::ALL {
            assert_eq!(site.as_str().parse::<SiteId>().unwrap(), site);
            assert_eq!(serde_json::to_string(&site).unwrap(), format!("\"{}\"", site.as_str()));
        }
        assert!("mlp".parse::<SiteId>().is_err());
    }

    #[test]
    fn validate_matching_store_is_ok() {
        let s = fixture();
        let r = validate(&s, &manifest(&["e0"]));
        assert!(r.ok);
        assert_eq!(r.alignment, Some(vec![0]));
    }

    #[test]
    fn validate_reports_missing_ids_and_alignment() {
        let header = StoreHeader::new("m", SiteId::ResidIn, 1, 1, vec!["b".into(), "a".into()]);
        let s = ActivationStore::new(header, vec![0.0, 1.0]).unwrap();
        let r = validate(&s, &manifest(&["a", "b"]));
        assert!(r.ok);
        assert_eq!(r.alignment, Some(vec![1, 0]));

        let r = validate(&s, &manifest(&["a", "b", "c"]));
        assert!(!r.ok);
        assert_eq!(r.missing_in_store, vec!["c".to_string()]);
        assert!(r.alignment.is_none());
    }

    #[test]
    fn validate_pinpoints_planted_nan() {
        let ids: Vec<String> = (0..5).map(|i| format!("e{i}")).collect();
        let header = StoreHeader::new("m", SiteId::AttnOut, 9, 4, ids.clone());
        let mut data = vec![0.5f32; 9 * 5 * 4];
        data[7 * 5 * 4 + 3 * 4 + 2] = f32::NAN;
        let s = ActivationStore::new(header, data).unwrap();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let r = validate(&s, &manifest(&refs));
        assert!(!r.ok);
        assert_eq!(r.non_finite_total, 1);
        assert_eq!(
            r.non_finite,
            vec![NonFinite {
                example: 3,
                example_id: "e3".into(),
                layer: 7,
                dim: 2
            }]
        );
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["non_finite"][0]["layer"], 7);
    }
}
