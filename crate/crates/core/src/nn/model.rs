use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, ModelKind, NnError, Tensor};
use crate::geometry::VoxelGrid;

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-7;

/// Binary cross-entropy of a (clamped) probability against a 0/1 label.
pub fn bce_loss(p: f64, label: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    /// Channels-last volume.
    Vol { d: usize, h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Act {
    fn len(self) -> usize {
        match self {
            Act::Vol { d, h, w, c } => d * h * w * c,
            Act::Flat(n) => n,
        }
    }
}

/// Per-layer weight gradients, laid out like [`Model::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Vec<f64>>);

impl Gradients {
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, f: f64) {
        for a in &mut self.0 {
            for x in a.iter_mut() {
                *x *= f;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|a| a.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// A sequential network ending in a sigmoid over a single unit.
///
/// Inputs are `(C, D, H, W)` tensors. Conv3d weights are stored
/// `[in][kd][kh][kw][out]` and dense weights `[in][out]`, each followed by
/// its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    input_shape: [usize; 4],
    layers: Vec<LayerSpec>,
    shapes: Vec<Act>,
    /// Whether layer i reads a ReLU output (possibly through Flatten).
    relu_input: Vec<bool>,
    /// Index of each parameterized layer's weight tensor in `params`.
    param_of: Vec<Option<usize>>,
    params: Vec<Tensor>,
}

fn taps(n_in: usize, n_out: usize, k: usize, s: usize) -> Vec<Vec<(usize, usize)>> {
    (0..n_in)
        .map(|p| {
            (0..k.min(p + 1))
                .filter_map(|kk| {
                    let q = p - kk;
                    (q % s == 0 && q / s < n_out).then_some((kk, q / s))
                })
                .collect()
        })
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Model {
    /// Builds the network with seeded uniform Glorot weights and zero biases.
    pub fn new(
        kind: ModelKind,
        input_shape: [usize; 4],
        layers: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let (shapes, relu_input, param_shapes) = Self::plan(input_shape, &layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut param_of = Vec::new();
        for (layer, ps) in layers.iter().zip(&param_shapes) {
            let Some((w_shape, fan_in, fan_out)) = ps else {
                param_of.push(None);
                continue;
            };
            param_of.push(Some(params.len()));
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Tensor::zeros(w_shape.clone());
            for v in &mut w.data {
                *v = rng.random_range(-limit..=limit);
            }
            let outputs = match layer {
                LayerSpec::Conv3d { out_ch, .. } => *out_ch,
                LayerSpec::Dense { outputs, .. } => *outputs,
                _ => unreachable!(),
            };
            params.push(w);
            params.push(Tensor::zeros(vec![outputs]));
        }
        Ok(Self {
            kind,
            input_shape,
            layers,
            shapes,
            relu_input,
            param_of,
            params,
        })
    }

    /// Rebuilds a model from stored weights, checking every tensor shape.
    pub fn from_parts(
        kind: ModelKind,
        input_shape: [usize; 4],
        layers: Vec<LayerSpec>,
        params: Vec<Tensor>,
    ) -> Result<Self, NnError> {
        let mut m = Self::new(kind, input_shape, layers, 0)?;
        if params.len() != m.params.len() {
            return Err(NnError::Shape(format!(
                "expected {} weight tensors, got {}",
                m.params.len(),
                params.len()
            )));
        }
        for (want, got) in m.params.iter().zip(&params) {
            if want.shape != got.shape {
                return Err(NnError::Shape(format!(
                    "weight shape {:?} where {:?} was expected",
                    got.shape, want.shape
                )));
            }
        }
        m.params = params;
        Ok(m)
    }

    #[allow(clippy::type_complexity)]
    fn plan(
        input_shape: [usize; 4],
        layers: &[LayerSpec],
    ) -> Result<(Vec<Act>, Vec<bool>, Vec<Option<(Vec<usize>, usize, usize)>>), NnError> {
        let [c, d, h, w] = input_shape;
        if input_shape.contains(&0) {
            return Err(NnError::Architecture(format!("input shape {input_shape:?}")));
        }
        let mut cur = Act::Vol { d, h, w, c };
        let mut shapes = vec![cur];
        let mut relu_input = Vec::new();
        let mut params = Vec::new();
        let mut prev_relu = false;
        for (i, layer) in layers.iter().enumerate() {
            relu_input.push(prev_relu);
            let bad = |msg: String| NnError::Architecture(format!("layer {i} ({layer:?}): {msg}"));
            let (next, p) = match *layer {
                LayerSpec::Conv3d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                } => {
                    let Act::Vol { d, h, w, c } = cur else {
                        return Err(bad("needs a volume input".into()));
                    };
                    if in_ch != c || out_ch == 0 || kernel == 0 || stride == 0 {
                        return Err(bad(format!("input has {c} channels")));
                    }
                    if d < kernel || h < kernel || w < kernel {
                        return Err(bad(format!("kernel larger than input {d}x{h}x{w}")));
                    }
                    let o = |n: usize| (n - kernel) / stride + 1;
                    let k3 = kernel * kernel * kernel;
                    (
                        Act::Vol {
                            d: o(d),
                            h: o(h),
                            w: o(w),
                            c: out_ch,
                        },
                        Some((
                            vec![in_ch, kernel, kernel, kernel, out_ch],
                            in_ch * k3,
                            out_ch * k3,
                        )),
                    )
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let Act::Flat(n) = cur else {
                        return Err(bad("needs a flat input (add Flatten)".into()));
                    };
                    if n != inputs || outputs == 0 {
                        return Err(bad(format!("input has {n} features")));
                    }
                    (Act::Flat(outputs), Some((vec![inputs, outputs], inputs, outputs)))
                }
                LayerSpec::Flatten => (Act::Flat(cur.len()), None),
                LayerSpec::Relu | LayerSpec::Sigmoid => (cur, None),
            };
            prev_relu = match layer {
                LayerSpec::Relu => true,
                LayerSpec::Flatten => prev_relu,
                _ => false,
            };
            cur = next;
            shapes.push(cur);
            params.push(p);
        }
        if layers.last() != Some(&LayerSpec::Sigmoid) || cur.len() != 1 {
            return Err(NnError::Architecture(
                "the network must end in a sigmoid over one unit".into(),
            ));
        }
        Ok((shapes, relu_input, params))
    }

    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients(self.params.iter().map(|t| vec![0.0; t.len()]).collect())
    }

    /// `(C, D, H, W)` data reordered channels-last.
    fn to_internal(&self, data: &[f64]) -> Vec<f64> {
        let [c, d, h, w] = self.input_shape;
        if c == 1 {
            return data.to_vec();
        }
        let n = d * h * w;
        let mut out = vec![0.0; c * n];
        for ch in 0..c {
            for i in 0..n {
                out[i * c + ch] = data[ch * n + i];
            }
        }
        out
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        if input.shape != self.input_shape {
            return Err(NnError::Shape(format!(
                "input shape {:?}, model expects {:?}",
                input.shape, self.input_shape
            )));
        }
        Ok(())
    }

    /// Clamped output probability.
    pub fn forward(&self, input: &Tensor) -> Result<f64, NnError> {
        self.check_input(input)?;
        Ok(self.forward_internal(&self.to_internal(&input.data)))
    }

    /// Clamped output probability for a one-channel grid input.
    pub fn predict_grid(&self, grid: &VoxelGrid) -> Result<f64, NnError> {
        self.forward(&Tensor::from_grid(grid))
    }

    fn forward_internal(&self, x: &[f64]) -> f64 {
        let acts = self.activations(x.to_vec());
        acts.last().unwrap()[0].clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    fn activations(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let y = match *layer {
                LayerSpec::Conv3d { kernel, stride, .. } => {
                    let p = self.param_of[i].unwrap();
                    conv_forward(
                        x,
                        self.shapes[i],
                        self.shapes[i + 1],
                        &self.params[p].data,
                        &self.params[p + 1].data,
                        kernel,
                        stride,
                    )
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let p = self.param_of[i].unwrap();
                    let (w, b) = (&self.params[p].data, &self.params[p + 1].data);
                    let mut y = b.clone();
                    for (j, &v) in x.iter().enumerate().take(inputs) {
                        if v != 0.0 {
                            let row = &w[j * outputs..(j + 1) * outputs];
                            for (yo, wo) in y.iter_mut().zip(row) {
                                *yo += v * wo;
                            }
                        }
                    }
                    y
                }
                LayerSpec::Relu => x.iter().map(|v| v.max(0.0)).collect(),
                LayerSpec::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
                LayerSpec::Flatten => x.clone(),
            };
            acts.push(y);
        }
        acts
    }

    /// Adds the gradient of the BCE loss for one example to `grads` and
    /// returns the example's loss.
    ///
    /// The final sigmoid and the loss are differentiated together
    /// (`dL/dz = σ(z) − y`), exact wherever the probability clamp is inactive.
    fn accumulate(&self, x: Vec<f64>, label: f64, grads: &mut Gradients) -> f64 {
        let acts = self.activations(x);
        let n = self.layers.len();
        let p = acts[n][0];
        let loss = bce_loss(p, label);
        let mut delta = vec![p - label];
        for i in (0..n - 1).rev() {
            let x = &acts[i];
            let y = &acts[i + 1];
            let need_dx = i > 0;
            delta = match self.layers[i] {
                LayerSpec::Relu => delta
                    .iter()
                    .zip(y)
                    .map(|(d, &o)| if o > 0.0 { *d } else { 0.0 })
                    .collect(),
                LayerSpec::Sigmoid => delta
                    .iter()
                    .zip(y)
                    .map(|(d, &s)| d * s * (1.0 - s))
                    .collect(),
                LayerSpec::Flatten => delta,
                LayerSpec::Dense { inputs, outputs } => {
                    let p = self.param_of[i].unwrap();
                    let w = &self.params[p].data;
                    {
                        let gw = &mut grads.0[p];
                        for (j, &v) in x.iter().enumerate().take(inputs) {
                            if v != 0.0 {
                                let row = &mut gw[j * outputs..(j + 1) * outputs];
                                for (g, d) in row.iter_mut().zip(&delta) {
                                    *g += v * d;
                                }
                            }
                        }
                    }
                    for (g, d) in grads.0[p + 1].iter_mut().zip(&delta) {
                        *g += d;
                    }
                    if need_dx {
                        let skip_zero = self.relu_input[i];
                        (0..inputs)
                            .map(|j| {
                                if skip_zero && x[j] == 0.0 {
                                    return 0.0;
                                }
                                w[j * outputs..(j + 1) * outputs]
                                    .iter()
                                    .zip(&delta)
                                    .map(|(a, b)| a * b)
                                    .sum()
                            })
                            .collect()
                    } else {
                        Vec::new()
                    }
                }
                LayerSpec::Conv3d { kernel, stride, .. } => {
                    let p = self.param_of[i].unwrap();
                    let mut gw = vec![0.0; self.params[p].len()];
                    let mut gb = vec![0.0; self.params[p + 1].len()];
                    let dx = conv_backward(
                        x,
                        &delta,
                        self.shapes[i],
                        self.shapes[i + 1],
                        &self.params[p].data,
                        kernel,
                        stride,
                        &mut gw,
                        &mut gb,
                        need_dx,
                        self.relu_input[i],
                    );
                    for (g, v) in grads.0[p].iter_mut().zip(&gw) {
                        *g += v;
                    }
                    for (g, v) in grads.0[p + 1].iter_mut().zip(&gb) {
                        *g += v;
                    }
                    dx
                }
            };
        }
        loss
    }

    /// Summed gradient and summed loss over `(input, label)` examples.
    pub fn gradient_sum(&self, examples: &[(&Tensor, f64)]) -> Result<(Gradients, f64), NnError> {
        let mut g = self.zero_gradients();
        let mut loss = 0.0;
        for (x, y) in examples {
            self.check_input(x)?;
            loss += self.accumulate(self.to_internal(&x.data), *y, &mut g);
        }
        Ok((g, loss))
    }

    /// Summed gradient and loss over grid examples.
    pub fn grid_gradient_sum<'a>(
        &self,
        examples: impl IntoIterator<Item = (&'a VoxelGrid, f64)>,
    ) -> Result<(Gradients, f64), NnError> {
        let mut g = self.zero_gradients();
        let mut loss = 0.0;
        for (grid, y) in examples {
            let t = Tensor::from_grid(grid);
            self.check_input(&t)?;
            loss += self.accumulate(t.data, y, &mut g);
        }
        Ok((g, loss))
    }
}

fn vol(a: Act) -> (usize, usize, usize, usize) {
    match a {
        Act::Vol { d, h, w, c } => (d, h, w, c),
        Act::Flat(_) => unreachable!("conv layers see volumes"),
    }
}

fn conv_forward(
    x: &[f64],
    input: Act,
    output: Act,
    w: &[f64],
    b: &[f64],
    k: usize,
    s: usize,
) -> Vec<f64> {
    let (d, h, wd, ci) = vol(input);
    let (od, oh, ow, co) = vol(output);
    let mut y = Vec::with_capacity(output.len());
    for _ in 0..od * oh * ow {
        y.extend_from_slice(b);
    }
    let (tz, ty, tx) = (taps(d, od, k, s), taps(h, oh, k, s), taps(wd, ow, k, s));
    for z in 0..d {
        for yy in 0..h {
            for xx in 0..wd {
                let base = ((z * h + yy) * wd + xx) * ci;
                for c in 0..ci {
                    let v = x[base + c];
                    if v == 0.0 {
                        continue;
                    }
                    for &(kz, oz) in &tz[z] {
                        for &(ky, oy) in &ty[yy] {
                            for &(kx, ox) in &tx[xx] {
                                let wb = (((c * k + kz) * k + ky) * k + kx) * co;
                                let yb = ((oz * oh + oy) * ow + ox) * co;
                                for (yv, wv) in y[yb..yb + co].iter_mut().zip(&w[wb..wb + co]) {
                                    *yv += v * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    dy: &[f64],
    input: Act,
    output: Act,
    w: &[f64],
    k: usize,
    s: usize,
    gw: &mut [f64],
    gb: &mut [f64],
    need_dx: bool,
    skip_zero_dx: bool,
) -> Vec<f64> {
    let (d, h, wd, ci) = vol(input);
    let (od, oh, ow, co) = vol(output);
    for cell in dy.chunks_exact(co) {
        for (g, v) in gb.iter_mut().zip(cell) {
            *g += v;
        }
    }
    let (tz, ty, tx) = (taps(d, od, k, s), taps(h, oh, k, s), taps(wd, ow, k, s));
    let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
    for z in 0..d {
        for yy in 0..h {
            for xx in 0..wd {
                let base = ((z * h + yy) * wd + xx) * ci;
                for c in 0..ci {
                    let v = x[base + c];
                    let want_dx = need_dx && !(skip_zero_dx && v == 0.0);
                    if v == 0.0 && !want_dx {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(kz, oz) in &tz[z] {
                        for &(ky, oy) in &ty[yy] {
                            for &(kx, ox) in &tx[xx] {
                                let wb = (((c * k + kz) * k + ky) * k + kx) * co;
                                let yb = ((oz * oh + oy) * ow + ox) * co;
                                let g = &dy[yb..yb + co];
                                if v != 0.0 {
                                    for (gv, dv) in gw[wb..wb + co].iter_mut().zip(g) {
                                        *gv += v * dv;
                                    }
                                }
                                if want_dx {
                                    acc += w[wb..wb + co]
                                        .iter()
                                        .zip(g)
                                        .map(|(a, b)| a * b)
                                        .sum::<f64>();
                                }
                            }
                        }
                    }
                    if want_dx {
                        dx[base + c] = acc;
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(1.0 - 1e-7, 1.0) - 1e-7).abs() < 1e-12);
        assert_eq!(bce_loss(0.5, 0.0), bce_loss(0.5, 1.0));
    }

    #[test]
    fn taps_cover_each_output_once_per_offset() {
        let t = taps(7, 3, 3, 2);
        assert_eq!(t[0], vec![(0, 0)]);
        assert_eq!(t[2], vec![(0, 1), (2, 0)]);
        assert_eq!(t[6], vec![(2, 2)]);
    }

    #[test]
    fn rejects_bad_architectures() {
        let conv_then_dense = vec![
            LayerSpec::Conv3d { in_ch: 1, out_ch: 2, kernel: 3, stride: 1 },
            LayerSpec::Dense { inputs: 2, outputs: 1 },
            LayerSpec::Sigmoid,
        ];
        assert!(Model::new(ModelKind::Carp, [1, 4, 4, 4], conv_then_dense, 0).is_err());
        let no_sigmoid = vec![LayerSpec::Flatten, LayerSpec::Dense { inputs: 64, outputs: 1 }];
        assert!(Model::new(ModelKind::Carp, [1, 4, 4, 4], no_sigmoid, 0).is_err());
    }
}
