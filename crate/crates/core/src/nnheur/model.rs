use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::asdw::{Tensor, TensorFile, WeightsError};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `self · other`
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t inner dimensions");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out.data[i * other.rows + j] =
                    self.row(i).iter().zip(other.row(j)).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        for i in 0..self.rows {
            for (x, b) in self.row_mut(i).iter_mut().zip(v) {
                *x += b;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Sequence length, one token per grid cell.
    pub d_r: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_k: usize,
    pub d_ff: usize,
    pub n_blocks: usize,
}

impl ModelConfig {
    pub fn new(
        d_r: usize,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
    ) -> Result<Self, WeightsError> {
        if d_r == 0 || d_model == 0 || n_heads == 0 || d_ff == 0 {
            return Err(WeightsError::InvalidConfig("all dimensions must be >= 1".into()));
        }
        if !d_model.is_multiple_of(n_heads) {
            return Err(WeightsError::InvalidConfig(format!(
                "d_model {d_model} is not divisible by {n_heads} heads"
            )));
        }
        Ok(ModelConfig {
            d_r,
            d_model,
            n_heads,
            d_k: d_model / n_heads,
            d_ff,
            n_blocks: 1,
        })
    }

    /// Grid side length for this sequence length, if `d_r` is a square.
    pub fn map_side(&self) -> Option<usize> {
        let s = (self.d_r as f64).sqrt().round() as usize;
        (s * s == self.d_r).then_some(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormWeights {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameters of the single-block encoder heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub risk_proj_w: Vec<f64>,
    pub risk_proj_b: Vec<f64>,
    pub start_embed: Mat,
    pub dest_embed: Mat,
    pub pos_embed: Mat,
    pub heads: Vec<HeadWeights>,
    pub attn_out_w: Mat,
    pub attn_out_b: Vec<f64>,
    pub ln1: LayerNormWeights,
    pub ln2: LayerNormWeights,
    pub ffn_w1: Mat,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: Mat,
    pub ffn_b2: Vec<f64>,
    pub head_out_w: Mat,
    pub head_out_b: Vec<f64>,
    /// Multiplier applied to the network output when targets were scaled
    /// during training.
    pub target_scale: Option<f64>,
}

struct Fetch<'a> {
    file: &'a TensorFile,
}

impl Fetch<'_> {
    fn tensor(&self, name: &str, expected: &[usize]) -> Result<&Tensor, WeightsError> {
        let t = self
            .file
            .get(name)
            .ok_or_else(|| WeightsError::MissingTensor(name.to_string()))?;
        if t.dims != expected {
            return Err(WeightsError::ShapeMismatch {
                name: name.to_string(),
                expected: expected.to_vec(),
                found: t.dims.clone(),
            });
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::NonFinite(name.to_string()));
        }
        Ok(t)
    }

    fn mat(&self, name: &str, rows: usize, cols: usize) -> Result<Mat, WeightsError> {
        let t = self.tensor(name, &[rows, cols])?;
        Ok(Mat::from_vec(rows, cols, t.data.iter().map(|&v| v as f64).collect()))
    }

    fn vec(&self, name: &str, len: usize) -> Result<Vec<f64>, WeightsError> {
        Ok(self.tensor(name, &[len])?.data.iter().map(|&v| v as f64).collect())
    }

    /// Dimensions of a rank-2 tensor used to infer the configuration.
    fn dims2(&self, name: &str) -> Result<(usize, usize), WeightsError> {
        let t = self
            .file
            .get(name)
            .ok_or_else(|| WeightsError::MissingTensor(name.to_string()))?;
        match t.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(WeightsError::ShapeMismatch {
                name: name.to_string(),
                expected: vec![0, 0],
                found: t.dims.clone(),
            }),
        }
    }
}

impl ModelWeights {
    /// Infers the configuration from tensor shapes and validates every
    /// tensor against it.
    pub fn from_tensors(file: &TensorFile) -> Result<(ModelConfig, Self), WeightsError> {
        let f = Fetch { file };
        let (one, d_model) = f.dims2("risk_proj.w")?;
        if one != 1 {
            return Err(WeightsError::ShapeMismatch {
                name: "risk_proj.w".into(),
                expected: vec![1, d_model],
                found: vec![one, d_model],
            });
        }
        let (d_r, _) = f.dims2("pos_embed")?;
        let n_heads = (0..)
            .take_while(|i| file.get(&format!("head{i}.wq")).is_some())
            .count();
        if n_heads == 0 {
            return Err(WeightsError::MissingTensor("head0.wq".into()));
        }
        let (_, d_k) = f.dims2("head0.wq")?;
        let (_, d_ff) = f.dims2("ffn.w1")?;
        let config = ModelConfig::new(d_r, d_model, n_heads, d_ff)?;
        if config.d_k != d_k {
            return Err(WeightsError::ShapeMismatch {
                name: "head0.wq".into(),
                expected: vec![d_model, config.d_k],
                found: vec![d_model, d_k],
            });
        }

        let mut heads = Vec::with_capacity(n_heads);
        for i in 0..n_heads {
            heads.push(HeadWeights {
                wq: f.mat(&format!("head{i}.wq"), d_model, d_k)?,
                wk: f.mat(&format!("head{i}.wk"), d_model, d_k)?,
                wv: f.mat(&format!("head{i}.wv"), d_model, d_k)?,
            });
        }
        let target_scale = match file.get("target_scale") {
            Some(_) => Some(f.vec("target_scale", 1)?[0]),
            None => None,
        };
        let weights = ModelWeights {
            risk_proj_w: f.mat("risk_proj.w", 1, d_model)?.data,
            risk_proj_b: f.vec("risk_proj.b", d_model)?,
            start_embed: f.mat("start_embed", d_r, d_model)?,
            dest_embed: f.mat("dest_embed", d_r, d_model)?,
            pos_embed: f.mat("pos_embed", d_r, d_model)?,
            heads,
            attn_out_w: f.mat("attn_out.w", n_heads * d_k, d_model)?,
            attn_out_b: f.vec("attn_out.b", d_model)?,
            ln1: LayerNormWeights {
                gain: f.vec("ln1.g", d_model)?,
                bias: f.vec("ln1.b", d_model)?,
            },
            ln2: LayerNormWeights {
                gain: f.vec("ln2.g", d_model)?,
                bias: f.vec("ln2.b", d_model)?,
            },
            ffn_w1: f.mat("ffn.w1", d_model, d_ff)?,
            ffn_b1: f.vec("ffn.b1", d_ff)?,
            ffn_w2: f.mat("ffn.w2", d_ff, d_model)?,
            ffn_b2: f.vec("ffn.b2", d_model)?,
            head_out_w: f.mat("head_out.w", d_model, d_r)?,
            head_out_b: f.vec("head_out.b", d_r)?,
            target_scale,
        };
        Ok((config, weights))
    }

    /// Tensors in canonical order.
    pub fn to_tensors(&self) -> TensorFile {
        let mat = |name: &str, m: &Mat| Tensor::new(name, vec![m.rows, m.cols], m.to_f32());
        let vec = |name: &str, v: &[f64]| {
            Tensor::new(name, vec![v.len()], v.iter().map(|&x| x as f32).collect())
        };
        let mut t = vec![
            Tensor::new(
                "risk_proj.w",
                vec![1, self.risk_proj_w.len()],
                self.risk_proj_w.iter().map(|&x| x as f32).collect(),
            ),
            vec("risk_proj.b", &self.risk_proj_b),
            mat("start_embed", &self.start_embed),
            mat("dest_embed", &self.dest_embed),
            mat("pos_embed", &self.pos_embed),
        ];
        for (i, h) in self.heads.iter().enumerate() {
            t.push(mat(&format!("head{i}.wq"), &h.wq));
            t.push(mat(&format!("head{i}.wk"), &h.wk));
            t.push(mat(&format!("head{i}.wv"), &h.wv));
        }
        t.extend([
            mat("attn_out.w", &self.attn_out_w),
            vec("attn_out.b", &self.attn_out_b),
            vec("ln1.g", &self.ln1.gain),
            vec("ln1.b", &self.ln1.bias),
            mat("ffn.w1", &self.ffn_w1),
            vec("ffn.b1", &self.ffn_b1),
            mat("ffn.w2", &self.ffn_w2),
            vec("ffn.b2", &self.ffn_b2),
            vec("ln2.g", &self.ln2.gain),
            vec("ln2.b", &self.ln2.bias),
            mat("head_out.w", &self.head_out_w),
            vec("head_out.b", &self.head_out_b),
        ]);
        if let Some(s) = self.target_scale {
            t.push(vec("target_scale", &[s]));
        }
        TensorFile { tensors: t }
    }

    /// Randomly initialised weights: embeddings ~ N(0, 1), linear layers
    /// ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), LayerNorm at identity. Values
    /// are rounded through f32 so they survive a save/load unchanged.
    pub fn random(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32 as f64)
                .collect();
            Mat::from_vec(rows, cols, data)
        };
        let (d_r, d_model, d_k, d_ff) = (config.d_r, config.d_model, config.d_k, config.d_ff);
        let start_embed = normal(d_r, d_model);
        let dest_embed = normal(d_r, d_model);
        let pos_embed = normal(d_r, d_model);

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1234);
        let mut uniform = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n)
                .map(|_| rng.random_range(-bound..bound) as f32 as f64)
                .collect()
        };
        let risk_proj_w = uniform(1, d_model);
        let risk_proj_b = uniform(1, d_model);
        let heads = (0..config.n_heads)
            .map(|_| HeadWeights {
                wq: Mat::from_vec(d_model, d_k, uniform(d_model, d_model * d_k)),
                wk: Mat::from_vec(d_model, d_k, uniform(d_model, d_model * d_k)),
                wv: Mat::from_vec(d_model, d_k, uniform(d_model, d_model * d_k)),
            })
            .collect();
        let cat = config.n_heads * d_k;
        ModelWeights {
            risk_proj_w,
            risk_proj_b,
            start_embed,
            dest_embed,
            pos_embed,
            heads,
            attn_out_w: Mat::from_vec(cat, d_model, uniform(cat, cat * d_model)),
            attn_out_b: uniform(cat, d_model),
            ln1: LayerNormWeights {
                gain: vec![1.0; d_model],
                bias: vec![0.0; d_model],
            },
            ln2: LayerNormWeights {
                gain: vec![1.0; d_model],
                bias: vec![0.0; d_model],
            },
            ffn_w1: Mat::from_vec(d_model, d_ff, uniform(d_model, d_model * d_ff)),
            ffn_b1: uniform(d_model, d_ff),
            ffn_w2: Mat::from_vec(d_ff, d_model, uniform(d_ff, d_ff * d_model)),
            ffn_b2: uniform(d_ff, d_model),
            head_out_w: Mat::from_vec(d_model, d_r, uniform(d_model, d_model * d_r)),
            head_out_b: uniform(d_model, d_r),
            target_scale: None,
        }
    }

    /// Same shapes as [`ModelWeights::random`], every value zero.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut w = Self::random(config, 0);
        w.visit_mut(|x| *x = 0.0);
        w
    }

    /// Applies `f` to every parameter value.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        let mut each = |v: &mut [f64]| v.iter_mut().for_each(&mut f);
        each(&mut self.risk_proj_w);
        each(&mut self.risk_proj_b);
        each(&mut self.start_embed.data);
        each(&mut self.dest_embed.data);
        each(&mut self.pos_embed.data);
        for h in &mut self.heads {
            each(&mut h.wq.data);
            each(&mut h.wk.data);
            each(&mut h.wv.data);
        }
        each(&mut self.attn_out_w.data);
        each(&mut self.attn_out_b);
        each(&mut self.ln1.gain);
        each(&mut self.ln1.bias);
        each(&mut self.ln2.gain);
        each(&mut self.ln2.bias);
        each(&mut self.ffn_w1.data);
        each(&mut self.ffn_b1);
        each(&mut self.ffn_w2.data);
        each(&mut self.ffn_b2);
        each(&mut self.head_out_w.data);
        each(&mut self.head_out_b);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        self.to_tensors().write(path)
    }
}

/// Reads an ASDW file and builds the model it describes.
pub fn load_weights(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelWeights), WeightsError> {
    ModelWeights::from_tensors(&TensorFile::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        assert_eq!(a.matmul(&b).data, vec![58.0, 64.0, 139.0, 154.0]);
        let bt = Mat::from_vec(2, 3, vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]);
        assert_eq!(a.matmul_t(&bt).data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(16, 8, 3, 16).is_err());
        assert!(ModelConfig::new(16, 0, 1, 16).is_err());
        let c = ModelConfig::new(16, 8, 2, 16).unwrap();
        assert_eq!(c.d_k, 4);
        assert_eq!(c.map_side(), Some(4));
    }

    #[test]
    fn tensors_round_trip() {
        let config = ModelConfig::new(9, 8, 2, 12).unwrap();
        let mut w = ModelWeights::random(&config, 5);
        w.target_scale = Some(3.0);
        let file = w.to_tensors();
        let (c2, w2) = ModelWeights::from_tensors(&file).unwrap();
        assert_eq!(c2, config);
        assert_eq!(w2, w);
        assert_eq!(w2.to_tensors().to_bytes(), file.to_bytes());
    }

    #[test]
    fn wrong_rank_is_shape_mismatch() {
        let config = ModelConfig::new(4, 8, 1, 8).unwrap();
        let mut file = ModelWeights::random(&config, 1).to_tensors();
        let t = file.tensors.iter_mut().find(|t| t.name == "head0.wq").unwrap();
        t.dims = vec![64];
        match ModelWeights::from_tensors(&file) {
            Err(WeightsError::ShapeMismatch { name, .. }) => assert_eq!(name, "head0.wq"),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_and_non_finite() {
        let config = ModelConfig::new(4, 8, 1, 8).unwrap();
        let mut file = ModelWeights::random(&config, 1).to_tensors();
        file.tensors.retain(|t| t.name != "ln2.b");
        assert!(matches!(
            ModelWeights::from_tensors(&file),
            Err(WeightsError::MissingTensor(n)) if n == "ln2.b"
        ));

        let mut file = ModelWeights::random(&config, 1).to_tensors();
        file.tensors[3].data[0] = f32::NAN;
        assert!(matches!(
            ModelWeights::from_tensors(&file),
            Err(WeightsError::NonFinite(_))
        ));
    }
}
