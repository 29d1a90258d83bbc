//! Desk-scale gated-convolution generators and strided-conv discriminators,
//! plus checkpoint serialization.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Tape, TensorId};

use super::config::GanConfig;

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl ParamTensor {
    fn new(name: &str, shape: Vec<usize>, values: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        ParamTensor {
            name: name.to_string(),
            shape,
            values,
        }
    }
}

fn normal(rng: &mut impl Rng, std: f64) -> f32 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std) as f32
}

fn conv_init(rng: &mut impl Rng, c_out: usize, c_in: usize, k: usize) -> Vec<f32> {
    let std = (2.0 / (c_in * k) as f64).sqrt();
    (0..c_out * c_in * k).map(|_| normal(rng, std)).collect()
}

/// Gated-conv generator: in-conv, strided downsample, two residual gated
/// blocks, nearest upsample, out-conv, plus a global residual connection
/// onto the mel channels of the input. Zeroing the output layer therefore
/// yields an exact identity mapping. Time length is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub in_ch: usize,
    pub out_ch: usize,
    pub hidden: usize,
    pub params: Vec<ParamTensor>,
}

impl Generator {
    pub fn new(in_ch: usize, out_ch: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        assert!(
            out_ch <= in_ch,
            "residual connection needs out_ch <= in_ch"
        );
        let h = hidden;
        // Small output init keeps the residual map near identity at start.
        let out_w: Vec<f32> = conv_init(rng, out_ch, h, 5)
            .into_iter()
            .map(|v| v * 0.1)
            .collect();
        let params = vec![
            ParamTensor::new("in.w", vec![2 * h, in_ch, 5], conv_init(rng, 2 * h, in_ch, 5)),
            ParamTensor::new("in.b", vec![2 * h], vec![0.0; 2 * h]),
            ParamTensor::new("down.w", vec![2 * h, h, 4], conv_init(rng, 2 * h, h, 4)),
            ParamTensor::new("down.b", vec![2 * h], vec![0.0; 2 * h]),
            ParamTensor::new("down.gamma", vec![h], vec![1.0; h]),
            ParamTensor::new("down.beta", vec![h], vec![0.0; h]),
            ParamTensor::new("res1.w", vec![2 * h, h, 3], conv_init(rng, 2 * h, h, 3)),
            ParamTensor::new("res1.b", vec![2 * h], vec![0.0; 2 * h]),
            ParamTensor::new("res1.gamma", vec![h], vec![1.0; h]),
            ParamTensor::new("res1.beta", vec![h], vec![0.0; h]),
            ParamTensor::new("res2.w", vec![2 * h, h, 3], conv_init(rng, 2 * h, h, 3)),
            ParamTensor::new("res2.b", vec![2 * h], vec![0.0; 2 * h]),
            ParamTensor::new("res2.gamma", vec![h], vec![1.0; h]),
            ParamTensor::new("res2.beta", vec![h], vec![0.0; h]),
            ParamTensor::new("up.w", vec![2 * h, h, 5], conv_init(rng, 2 * h, h, 5)),
            ParamTensor::new("up.b", vec![2 * h], vec![0.0; 2 * h]),
            ParamTensor::new("up.gamma", vec![h], vec![1.0; h]),
            ParamTensor::new("up.beta", vec![h], vec![0.0; h]),
            ParamTensor::new("out.w", vec![out_ch, h, 5], out_w),
            ParamTensor::new("out.b", vec![out_ch], vec![0.0; out_ch]),
        ];
        Generator {
            in_ch,
            out_ch,
            hidden,
            params,
        }
    }

    /// Feed all parameters onto a tape; returns their ids in param order.
    pub fn feed(&self, tape: &mut Tape<f32>) -> Result<Vec<TensorId>> {
        self.params
            .iter()
            .map(|p| tape.input(&p.shape, p.values.clone()))
            .collect()
    }

    /// Forward pass given previously fed parameter ids.
    /// Input `[in_ch, T]`, output `[out_ch, T]` (T padded internally to even).
    pub fn forward(&self, tape: &mut Tape<f32>, ids: &[TensorId], x: TensorId) -> Result<TensorId> {
        let t_in = tape.shape(x)[1];
        let x = if t_in % 2 == 1 {
            tape.pad(x, 1, 0, 1)?
        } else {
            x
        };
        let h = self.hidden;
        let glu_conv = |tape: &mut Tape<f32>,
                        x: TensorId,
                        w: TensorId,
                        b: TensorId,
                        stride: usize,
                        pad: usize|
         -> Result<TensorId> {
            let y = tape.conv1d(x, w, Some(b), stride, pad)?;
            let a = tape.slice(y, 0, 0, h)?;
            let g = tape.slice(y, 0, h, h)?;
            tape.gated_linear_unit(a, g)
        };
        let mut cur = glu_conv(tape, x, ids[0], ids[1], 1, 2)?;
        cur = glu_conv(tape, cur, ids[2], ids[3], 2, 1)?;
        cur = tape.instance_norm(cur, ids[4], ids[5], 1e-5)?;
        for block in 0..2 {
            let base = 6 + block * 4;
            let y = glu_conv(tape, cur, ids[base], ids[base + 1], 1, 1)?;
            let y = tape.instance_norm(y, ids[base + 2], ids[base + 3], 1e-5)?;
            cur = tape.add(cur, y)?;
        }
        cur = tape.upsample1d(cur, 2)?;
        cur = glu_conv(tape, cur, ids[14], ids[15], 1, 2)?;
        cur = tape.instance_norm(cur, ids[16], ids[17], 1e-5)?;
        let delta = tape.conv1d(cur, ids[18], Some(ids[19]), 1, 2)?;
        // Global residual over the mel channels of the input.
        let x_mel = tape.slice(x, 0, 0, self.out_ch)?;
        let out = tape.add(delta, x_mel)?;
        if t_in % 2 == 1 {
            tape.slice(out, 1, 0, t_in)
        } else {
            Ok(out)
        }
    }

    /// Zero the output layer, making the generator an exact identity map
    /// over the mel channels.
    pub fn zero_output_layer(&mut self) {
        for p in self.params.iter_mut() {
            if p.name == "out.w" || p.name == "out.b" {
                p.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Convenience single-shot forward on a fresh tape, returning values.
    pub fn apply(&self, input: &[Vec<f32>]) -> Result<Vec<Vec<f32>>> {
        let c = self.in_ch;
        if input.len() != c {
            return Err(Error::shape(
                "generator",
                format!("expected {c} channels, got {}", input.len()),
            ));
        }
        let t = input.first().map_or(0, |r| r.len());
        if t == 0 {
            return Ok(vec![Vec::new(); self.out_ch]);
        }
        let mut tape: Tape<f32> = Tape::new();
        let flat: Vec<f32> = input.iter().flat_map(|r| r.iter().copied()).collect();
        let x = tape.input(&[c, t], flat)?;
        let ids = self.feed(&mut tape)?;
        let y = self.forward(&mut tape, &ids, x)?;
        let vals = tape.values(y);
        let t_out = tape.shape(y)[1];
        Ok((0..self.out_ch)
            .map(|ch| vals[ch * t_out..(ch + 1) * t_out].to_vec())
            .collect())
    }
}

/// Strided-conv discriminator producing a per-position score map.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub in_ch: usize,
    pub hidden: usize,
    pub params: Vec<ParamTensor>,
}

impl Discriminator {
    pub fn new(in_ch: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let h = hidden;
        let params = vec![
            ParamTensor::new("c1.w", vec![h, in_ch, 4], conv_init(rng, h, in_ch, 4)),
            ParamTensor::new("c1.b", vec![h], vec![0.0; h]),
            ParamTensor::new("c2.w", vec![h, h, 4], conv_init(rng, h, h, 4)),
            ParamTensor::new("c2.b", vec![h], vec![0.0; h]),
            ParamTensor::new("c3.w", vec![1, h, 3], conv_init(rng, 1, h, 3)),
            ParamTensor::new("c3.b", vec![1], vec![0.0]),
        ];
        Discriminator {
            in_ch,
            hidden,
            params,
        }
    }

    pub fn feed(&self, tape: &mut Tape<f32>) -> Result<Vec<TensorId>> {
        self.params
            .iter()
            .map(|p| tape.input(&p.shape, p.values.clone()))
            .collect()
    }

    /// Input `[in_ch, T]`, output `[1, T/4]` scores.
    pub fn forward(&self, tape: &mut Tape<f32>, ids: &[TensorId], x: TensorId) -> Result<TensorId> {
        let c1 = tape.conv1d(x, ids[0], Some(ids[1]), 2, 1)?;
        let a1 = tape.leaky_relu(c1, 0.2);
        let c2 = tape.conv1d(a1, ids[2], Some(ids[3]), 2, 1)?;
        let a2 = tape.leaky_relu(c2, 0.2);
        tape.conv1d(a2, ids[4], Some(ids[5]), 1, 1)
    }
}

/// The generator pair plus discriminators; the second discriminators exist
/// exactly when the two-step adversarial loss is enabled.
#[derive(Debug, Clone)]
pub struct ModelPair {
    /// X -> Y generator.
    pub g: Generator,
    /// Y -> X generator.
    pub f: Generator,
    pub d_x: Discriminator,
    pub d_y: Discriminator,
    pub d2_x: Option<Discriminator>,
    pub d2_y: Option<Discriminator>,
}

impl ModelPair {
    pub fn new(cfg: &GanConfig, rng: &mut impl Rng) -> Self {
        let in_ch = cfg.gen_in_channels();
        let g = Generator::new(in_ch, cfg.n_mels, cfg.hidden, rng);
        let f = Generator::new(in_ch, cfg.n_mels, cfg.hidden, rng);
        let d_x = Discriminator::new(cfg.n_mels, cfg.hidden, rng);
        let d_y = Discriminator::new(cfg.n_mels, cfg.hidden, rng);
        let (d2_x, d2_y) = if cfg.two_step {
            (
                Some(Discriminator::new(cfg.n_mels, cfg.hidden, rng)),
                Some(Discriminator::new(cfg.n_mels, cfg.hidden, rng)),
            )
        } else {
            (None, None)
        };
        ModelPair {
            g,
            f,
            d_x,
            d_y,
            d2_x,
            d2_y,
        }
    }

    fn blocks(&self) -> Vec<(&'static str, &Vec<ParamTensor>)> {
        let mut v = vec![
            ("g", &self.g.params),
            ("f", &self.f.params),
            ("d_x", &self.d_x.params),
            ("d_y", &self.d_y.params),
        ];
        if let Some(d) = &self.d2_x {
            v.push(("d2_x", &d.params));
        }
        if let Some(d) = &self.d2_y {
            v.push(("d2_y", &d.params));
        }
        v
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Vec<ParamTensor>)> {
        let mut v = vec![
            ("g", &mut self.g.params),
            ("f", &mut self.f.params),
            ("d_x", &mut self.d_x.params),
            ("d_y", &mut self.d_y.params),
        ];
        if let Some(d) = &mut self.d2_x {
            v.push(("d2_x", &mut d.params));
        }
        if let Some(d) = &mut self.d2_y {
            v.push(("d2_y", &mut d.params));
        }
        v
    }
}

/// Checkpoint metadata sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: usize,
    pub config_hash: String,
    pub blocks: Vec<BlockMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockMeta {
    pub block: String,
    pub name: String,
    pub shape: Vec<usize>,
}

/// Write `<path>.bin` (little-endian f32 blob) and `<path>.json` (metadata).
pub fn save_checkpoint(
    path_stem: impl AsRef<Path>,
    models: &ModelPair,
    iteration: usize,
    config_hash: &str,
) -> Result<()> {
    let stem = path_stem.as_ref();
    if let Some(parent) = stem.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut blocks = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    for (block, params) in models.blocks() {
        for p in params {
            blocks.push(BlockMeta {
                block: block.to_string(),
                name: p.name.clone(),
                shape: p.shape.clone(),
            });
            for v in &p.values {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let meta = CheckpointMeta {
        iteration,
        config_hash: config_hash.to_string(),
        blocks,
    };
    let bin_path = stem.with_extension("bin");
    let mut f = std::fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    f.write_all(&blob).map_err(|e| Error::io(&bin_path, e))?;
    let json_path = stem.with_extension("json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(&meta)?)
        .map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

/// Load parameters into a freshly constructed [`ModelPair`] for `cfg`.
pub fn load_checkpoint(
    path_stem: impl AsRef<Path>,
    cfg: &GanConfig,
) -> Result<(ModelPair, CheckpointMeta)> {
    let stem = path_stem.as_ref();
    let json_path = stem.with_extension("json");
    let meta: CheckpointMeta = serde_json::from_slice(
        &std::fs::read(&json_path).map_err(|e| Error::io(&json_path, e))?,
    )?;
    let bin_path = stem.with_extension("bin");
    let blob = std::fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut models = ModelPair::new(cfg, &mut rng);
    let mut offset = 0usize;
    let mut meta_iter = meta.blocks.iter();
    for (block, params) in models.blocks_mut() {
        for p in params.iter_mut() {
            let bm = meta_iter.next().ok_or_else(|| {
                Error::Config(format!("checkpoint metadata too short at {block}/{}", p.name))
            })?;
            if bm.block != block || bm.name != p.name || bm.shape != p.shape {
                return Err(Error::Config(format!(
                    "checkpoint mismatch: expected {block}/{} {:?}, found {}/{} {:?}",
                    p.name, p.shape, bm.block, bm.name, bm.shape
                )));
            }
            let n = p.values.len();
            if offset + 4 * n > blob.len() {
                return Err(Error::Config("checkpoint blob truncated".into()));
            }
            for (i, v) in p.values.iter_mut().enumerate() {
                let b = &blob[offset + 4 * i..offset + 4 * i + 4];
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
            offset += 4 * n;
        }
    }
    if meta_iter.next().is_some() || offset != blob.len() {
        return Err(Error::Config(
            "checkpoint does not match the configured model set".into(),
        ));
    }
    Ok((models, meta))
}

use rand::SeedableRng;
