//! Run configuration and the model container file.
//!
//! The container is a self-describing little-endian binary: a fixed
//! header (magic, format version, section count), length-prefixed tagged
//! sections, and a SHA-256 trailer over everything before it. Numeric
//! payloads are stored as raw IEEE-754 bits so that deserialization is
//! bit-identical. Layout:
//!
//! ```text
//! "SUVM"  u32 version  u32 section_count
//! repeat: [u8;4] tag   u64 length   payload
//! "SHievA2" replaced by: "SHA2" + 32-byte digest
//! ```
//!
//! Sections: `CONF` (run configuration, JSON), `DICT` (visual
//! dictionary), `MODL` (one per object model). A JSON export of the whole
//! container exists for inspection.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::VisualDictionary;
use crate::error::{Error, Result};
use crate::generative::{SuvModel, ViewletAppearance};
use crate::imaging::{HogParams, PcaProjection};
use crate::raster::GrayRaster;
use crate::semantics::{CipcEdge, CipcGraph, CipcParams, CipcRule, GpeEmbedding};
use crate::srn::{SpringEdge, Srn};

const MAGIC: &[u8; 4] = b"SUVM";
const VERSION: u32 = 1;
const TRAILER: &[u8; 4] = b"SHA2";

/// Every run parameter, serialized into all outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub window_w: usize,
    pub window_h: usize,
    pub pyramid_ratio: f64,
    pub hog: HogParams,
    pub pca_dim: usize,
    pub k: usize,
    pub seed: u64,
    /// Random patches sampled for dictionary learning.
    pub dict_patches: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    /// Dense-scan stride (learning and detection).
    pub stride: usize,
    /// Assignment-distance cutoff percentile for detection scans.
    pub distance_cutoff_percentile: Option<f64>,
    pub lambda: f64,
    pub variance_threshold: f64,
    pub min_pair_support: u64,
    pub min_component_size: usize,
    pub cipc: CipcParams,
    pub gpe_max_iters: usize,
    pub gpe_tol: f64,
    pub compatibility_threshold: f64,
    pub part_threshold: usize,
    pub nms_iou: f64,
    pub eval_iou: f64,
    pub part_inclusion: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            window_w: 128,
            window_h: 96,
            pyramid_ratio: std::f64::consts::FRAC_1_SQRT_2,
            hog: HogParams::default(),
            pca_dim: 64,
            k: 64,
            seed: 0,
            dict_patches: 20_000,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-9,
            stride: 16,
            distance_cutoff_percentile: Some(99.0),
            lambda: 0.01,
            variance_threshold: 0.15,
            min_pair_support: 20,
            min_component_size: 5,
            cipc: CipcParams::default(),
            gpe_max_iters: 1000,
            gpe_tol: 1e-12,
            compatibility_threshold: crate::detection::CHI2_99_3DOF,
            part_threshold: 3,
            nms_iou: 0.5,
            eval_iou: 0.5,
            part_inclusion: 0.9,
        }
    }
}

/// The on-disk artifact: configuration, dictionary and object models.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub config: RunConfig,
    pub dictionary: VisualDictionary,
    pub models: Vec<SuvModel>,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections: Vec<([u8; 4], Vec<u8>)> = Vec::new();
        sections.push((
            *b"CONF",
            serde_json::to_vec(&self.config).expect("config serializes"),
        ));
        sections.push((*b"DICT", encode_dictionary(&self.dictionary)));
        for m in &self.models {
            sections.push((*b"MODL", encode_model(m)));
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (tag, payload) in &sections {
            out.extend_from_slice(tag);
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(TRAILER);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 + 36 || &bytes[0..4] != MAGIC {
            return Err(Error::ModelFormat("not a model file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::ModelFormat(format!(
                "model file format version {version} is not supported (expected {VERSION})"
            )));
        }
        // verify the trailer digest
        let body_len = bytes.len() - 36;
        if &bytes[body_len..body_len + 4] != TRAILER {
            return Err(Error::ModelFormat("model file trailer missing".into()));
        }
        let digest = Sha256::digest(&bytes[..body_len]);
        if digest.as_slice() != &bytes[body_len + 4..] {
            return Err(Error::ModelFormat(
                "model file checksum mismatch (corrupted file)".into(),
            ));
        }

        let section_count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut offset = 12;
        let mut config: Option<RunConfig> = None;
        let mut dictionary: Option<VisualDictionary> = None;
        let mut models = Vec::new();
        for _ in 0..section_count {
            if offset + 12 > body_len {
                return Err(Error::ModelFormat("model file truncated".into()));
            }
            let tag: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
            let len =
                u64::from_le_bytes(bytes[offset + 4..offset + 12].try_into().unwrap()) as usize;
            offset += 12;
            if offset + len > body_len {
                return Err(Error::ModelFormat("model file section overruns".into()));
            }
            let payload = &bytes[offset..offset + len];
            offset += len;
            match &tag {
                b"CONF" => {
                    config = Some(serde_json::from_slice(payload).map_err(|e| {
                        Error::ModelFormat(format!("config section: {e}"))
                    })?);
                }
                b"DICT" => {
                    dictionary = Some(decode_dictionary(&mut Reader::new(payload))?);
                }
                b"MODL" => {
                    models.push(decode_model(&mut Reader::new(payload))?);
                }
                other => {
                    return Err(Error::ModelFormat(format!(
                        "unknown section tag {:?}",
                        String::from_utf8_lossy(other)
                    )));
                }
            }
        }
        Ok(ModelFile {
            config: config.ok_or_else(|| Error::ModelFormat("missing CONF section".into()))?,
            dictionary: dictionary
                .ok_or_else(|| Error::ModelFormat("missing DICT section".into()))?,
            models,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn checksum_hex(&self) -> String {
        let bytes = self.to_bytes();
        let digest = &bytes[bytes.len() - 32..];
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Inspection export: structure and parameters as JSON (pixel patches
    /// are summarized by their dimensions, not dumped).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format_version": VERSION,
            "config": self.config,
            "dictionary": {
                "k": self.dictionary.k(),
                "descriptor_dim": self.dictionary.dim(),
                "window": [self.dictionary.window_w, self.dictionary.window_h],
                "word_counts": self.dictionary.word_counts,
                "distance_quantiles": self.dictionary.distance_quantiles,
            },
            "models": self.models.iter().map(|m| serde_json::json!({
                "name": m.name,
                "viewlets": m.srn.nodes,
                "edges": m.srn.edges,
                "node_scale_x": m.srn.scale_x,
                "node_scale_y": m.srn.scale_y,
                "parts": {
                    "count": m.cipc.part_count,
                    "part_of": m.cipc.part_of,
                    "edges": m.cipc.edges,
                },
                "embedding": {
                    "x": m.gpe.x,
                    "y": m.gpe.y,
                    "scale": m.gpe.scale,
                    "stress": m.gpe.stress,
                },
                "part_inclusion": m.part_inclusion,
            })).collect::<Vec<_>>(),
        })
    }
}

// ---- binary encoding helpers ----

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat("section payload truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::ModelFormat("invalid utf8 string".into()))
    }

    fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        (0..len).map(|_| self.f64()).collect()
    }

    fn u64_vec(&mut self) -> Result<Vec<u64>> {
        let len = self.u64()? as usize;
        (0..len).map(|_| self.u64()).collect()
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_f64_vec(out: &mut Vec<u8>, v: &[f64]) {
    put_u64(out, v.len() as u64);
    for &x in v {
        put_f64(out, x);
    }
}

fn put_u64_vec(out: &mut Vec<u8>, v: &[u64]) {
    put_u64(out, v.len() as u64);
    for &x in v {
        put_u64(out, x);
    }
}

fn put_raster(out: &mut Vec<u8>, r: &GrayRaster) {
    put_u32(out, r.width() as u32);
    put_u32(out, r.height() as u32);
    for &v in r.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_raster(r: &mut Reader) -> Result<GrayRaster> {
    let w = r.u32()? as usize;
    let h = r.u32()? as usize;
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        data.push(r.f32()?);
    }
    Ok(GrayRaster::from_vec(w, h, data))
}

fn encode_dictionary(d: &VisualDictionary) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, d.k() as u32);
    put_u32(&mut out, d.dim() as u32);
    put_u32(&mut out, d.window_w as u32);
    put_u32(&mut out, d.window_h as u32);
    put_u32(&mut out, d.hog.cell_size as u32);
    put_u32(&mut out, d.hog.orientation_bins as u32);
    put_u32(&mut out, d.hog.block_size as u32);
    put_f64(&mut out, d.hog.clip);
    // pca
    put_u32(&mut out, d.pca.input_dim() as u32);
    put_u32(&mut out, d.pca.output_dim() as u32);
    put_f64_vec(&mut out, d.pca.mean.as_slice());
    put_f64_vec(&mut out, d.pca.basis.as_slice()); // column-major
    put_f64_vec(&mut out, &d.pca.explained_variance_ratio);
    // centroids row-major
    let mut row_major = Vec::with_capacity(d.k() * d.dim());
    for i in 0..d.k() {
        for j in 0..d.dim() {
            row_major.push(d.centroids[(i, j)]);
        }
    }
    put_f64_vec(&mut out, &row_major);
    put_u64_vec(&mut out, &d.word_counts);
    put_u32(&mut out, d.mean_patches.len() as u32);
    for p in &d.mean_patches {
        put_raster(&mut out, p);
    }
    put_f64_vec(&mut out, &d.distance_quantiles);
    put_f64_vec(&mut out, &d.appearance_variance);
    out
}

fn decode_dictionary(r: &mut Reader) -> Result<VisualDictionary> {
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let window_w = r.u32()? as usize;
    let window_h = r.u32()? as usize;
    let hog = HogParams {
        cell_size: r.u32()? as usize,
        orientation_bins: r.u32()? as usize,
        block_size: r.u32()? as usize,
        clip: r.f64()?,
    };
    let input_dim = r.u32()? as usize;
    let output_dim = r.u32()? as usize;
    let mean = DVector::from_vec(r.f64_vec()?);
    let basis_flat = r.f64_vec()?;
    if mean.len() != input_dim || basis_flat.len() != input_dim * output_dim {
        return Err(Error::ModelFormat("pca dimensions inconsistent".into()));
    }
    let basis = DMatrix::from_column_slice(input_dim, output_dim, &basis_flat);
    let evr = r.f64_vec()?;
    let pca = PcaProjection {
        mean,
        basis,
        explained_variance_ratio: evr,
    };
    let row_major = r.f64_vec()?;
    if row_major.len() != k * dim {
        return Err(Error::ModelFormat("centroid matrix size mismatch".into()));
    }
    let centroids = DMatrix::from_row_slice(k, dim, &row_major);
    let word_counts = r.u64_vec()?;
    let n_patches = r.u32()? as usize;
    let mut mean_patches = Vec::with_capacity(n_patches);
    for _ in 0..n_patches {
        mean_patches.push(read_raster(r)?);
    }
    let distance_quantiles = r.f64_vec()?;
    let appearance_variance = r.f64_vec()?;
    Ok(VisualDictionary {
        centroids,
        pca,
        hog,
        window_w,
        window_h,
        word_counts,
        mean_patches,
        distance_quantiles,
        appearance_variance,
    })
}

fn encode_model(m: &SuvModel) -> Vec<u8> {
    let mut out = Vec::new();
    put_string(&mut out, &m.name);
    put_u32(&mut out, m.window_w as u32);
    put_u32(&mut out, m.window_h as u32);
    put_f64(&mut out, m.part_inclusion);
    // srn
    let n = m.srn.len();
    put_u64_vec(&mut out, &m.srn.nodes.iter().map(|&v| v as u64).collect::<Vec<_>>());
    put_f64_vec(&mut out, &m.srn.scale_x);
    put_f64_vec(&mut out, &m.srn.scale_y);
    put_u32(&mut out, m.srn.edges.len() as u32);
    for e in &m.srn.edges {
        put_u64(&mut out, e.i as u64);
        put_u64(&mut out, e.j as u64);
        put_f64(&mut out, e.stiffness_x);
        put_f64(&mut out, e.stiffness_y);
        put_f64(&mut out, e.stiffness_s);
        put_f64(&mut out, e.rest_x);
        put_f64(&mut out, e.rest_y);
        put_f64(&mut out, e.rest_log_scale);
        put_u64(&mut out, e.support);
        put_f64(&mut out, e.combined_variance);
    }
    // cipc
    put_u32(&mut out, m.cipc.edges.len() as u32);
    for e in &m.cipc.edges {
        put_u64(&mut out, e.u as u64);
        put_u64(&mut out, e.v as u64);
        out.push(match e.rule {
            CipcRule::ExclusiveSubstitutable => 0,
            CipcRule::StableShifted => 1,
        });
    }
    put_u64_vec(&mut out, &m.cipc.part_of.iter().map(|&v| v as u64).collect::<Vec<_>>());
    put_u32(&mut out, m.cipc.part_count as u32);
    // gpe
    put_f64_vec(&mut out, &m.gpe.x);
    put_f64_vec(&mut out, &m.gpe.y);
    put_f64_vec(&mut out, &m.gpe.scale);
    put_f64(&mut out, m.gpe.stress);
    out.push(m.gpe.converged as u8);
    // appearance
    put_u32(&mut out, n as u32);
    for a in &m.appearance {
        put_f64_vec(&mut out, a.centroid.as_slice());
        put_f64(&mut out, a.variance);
        put_raster(&mut out, &a.mean_patch);
    }
    out
}

fn decode_model(r: &mut Reader) -> Result<SuvModel> {
    let name = r.string()?;
    let window_w = r.u32()? as usize;
    let window_h = r.u32()? as usize;
    let part_inclusion = r.f64()?;
    let nodes: Vec<usize> = r.u64_vec()?.into_iter().map(|v| v as usize).collect();
    let scale_x = r.f64_vec()?;
    let scale_y = r.f64_vec()?;
    let n_edges = r.u32()? as usize;
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        edges.push(SpringEdge {
            i: r.u64()? as usize,
            j: r.u64()? as usize,
            stiffness_x: r.f64()?,
            stiffness_y: r.f64()?,
            stiffness_s: r.f64()?,
            rest_x: r.f64()?,
            rest_y: r.f64()?,
            rest_log_scale: r.f64()?,
            support: r.u64()?,
            combined_variance: r.f64()?,
        });
    }
    let srn = Srn::new(nodes.clone(), edges, scale_x, scale_y);
    let n_cipc = r.u32()? as usize;
    let mut cipc_edges = Vec::with_capacity(n_cipc);
    for _ in 0..n_cipc {
        let u = r.u64()? as usize;
        let v = r.u64()? as usize;
        let rule = match r.u8()? {
            0 => CipcRule::ExclusiveSubstitutable,
            1 => CipcRule::StableShifted,
            other => {
                return Err(Error::ModelFormat(format!("unknown cipc rule tag {other}")));
            }
        };
        cipc_edges.push(CipcEdge { u, v, rule });
    }
    let part_of: Vec<usize> = r.u64_vec()?.into_iter().map(|v| v as usize).collect();
    let part_count = r.u32()? as usize;
    let cipc = CipcGraph {
        nodes: nodes.clone(),
        edges: cipc_edges,
        part_of,
        part_count,
    };
    let gpe = GpeEmbedding {
        nodes: nodes.clone(),
        x: r.f64_vec()?,
        y: r.f64_vec()?,
        scale: r.f64_vec()?,
        stress: r.f64()?,
        converged: r.u8()? != 0,
    };
    let n_app = r.u32()? as usize;
    if n_app != nodes.len() {
        return Err(Error::ModelFormat("appearance count mismatch".into()));
    }
    let mut appearance = Vec::with_capacity(n_app);
    for _ in 0..n_app {
        appearance.push(ViewletAppearance {
            centroid: DVector::from_vec(r.f64_vec()?),
            variance: r.f64()?,
            mean_patch: read_raster(r)?,
        });
    }
    Ok(SuvModel {
        name,
        window_w,
        window_h,
        srn,
        cipc,
        gpe,
        appearance,
        part_inclusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::PlantedModelBuilder;

    fn sample_file() -> ModelFile {
        let mut model = PlantedModelBuilder::new(32, 32)
            .part_at(0.0, 0.0, 2.0, 2)
            .part_at(1.7, 0.3, 2.5, 1)
            .part_at(0.4, 1.9, 3.0, 1)
            .stiffness(123.456, 78.9, 1e5)
            .hub_edges(1)
            .inclusion(0.9)
            .build();
        let dict = crate::synth::build_pixel_dictionary(
            &mut model,
            &HogParams::default(),
            12,
            8,
            42,
        )
        .unwrap();
        ModelFile {
            config: RunConfig {
                seed: 99,
                pyramid_ratio: 0.7071067811865476,
                ..RunConfig::default()
            },
            dictionary: dict,
            models: vec![model],
        }
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let mf = sample_file();
        let bytes = mf.to_bytes();
        let back = ModelFile::from_bytes(&bytes).unwrap();
        let bytes2 = back.to_bytes();
        if bytes != bytes2 {
            let first = bytes
                .iter()
                .zip(&bytes2)
                .position(|(a, b)| a != b)
                .unwrap_or(bytes.len().min(bytes2.len()));
            panic!(
                "roundtrip differs: len {} vs {}, first difference at byte {first}: {:?} vs {:?}",
                bytes.len(),
                bytes2.len(),
                &bytes[first.saturating_sub(12)..(first + 12).min(bytes.len())],
                &bytes2[first.saturating_sub(12)..(first + 12).min(bytes2.len())],
            );
        }
        assert_eq!(mf.checksum_hex(), back.checksum_hex());
    }

    #[test]
    fn version_mismatch_rejected_clearly() {
        let mf = sample_file();
        let mut bytes = mf.to_bytes();
        bytes[4] = 99; // bump version
        match ModelFile::from_bytes(&bytes) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn corruption_detected_by_checksum() {
        let mf = sample_file();
        let mut bytes = mf.to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        match ModelFile::from_bytes(&bytes) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("checksum"), "{msg}"),
            other => panic!("expected checksum error, got {other:?}"),
        }
    }

    #[test]
    fn save_load_through_filesystem() {
        let mf = sample_file();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.suvm");
        mf.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(mf.to_bytes(), back.to_bytes());
    }

    #[test]
    fn json_export_has_structure() {
        let mf = sample_file();
        let j = mf.to_json();
        assert_eq!(j["format_version"], 1);
        assert!(j["config"]["k"].is_number());
        assert_eq!(j["models"][0]["parts"]["count"], 3);
        assert!(j["models"][0]["edges"].as_array().unwrap().len() >= 3);
    }
}
