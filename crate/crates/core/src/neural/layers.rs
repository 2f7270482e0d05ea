//! Affine, MLP, GRU and CNN building blocks over a [`Graph`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::graph::{ConvShape, Graph, PoolShape, Var};
use crate::neural::params::ParamStore;
use crate::neural::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let w = store.add_uniform(format!("{name}.w"), vec![inputs, outputs], inputs, scale, rng);
        let b = store.add_zeros(format!("{name}.b"), vec![outputs]);
        Linear { w, b, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.affine(x, w, b)
    }
}

/// Affine layers with CELU between them; the last layer is linear unless
/// `activate_output` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activate_output: bool,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        sizes: &[usize],
        activate_output: bool,
        output_scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut prev = inputs;
        for (i, &s) in sizes.iter().enumerate() {
            let scale = if i + 1 == sizes.len() { output_scale } else { 1.0 };
            layers.push(Linear::new(store, &format!("{name}.{i}"), prev, s, scale, rng));
            prev = s;
        }
        Mlp { layers, activate_output }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Var {
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(g, x);
            if i + 1 < n || self.activate_output {
                x = g.celu(x);
            }
        }
        x
    }
}

/// Single-layer GRU:
/// `r = s(Wr x + Ur h + br)`, `z = s(Wz x + Uz h + bz)`,
/// `n = tanh(Wn x + Un (r*h) + bn)`, `h' = (1 - z) h + z n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    /// `in x 3H`, gate blocks ordered r, z, n.
    pub wx: usize,
    /// `3H`.
    pub b: usize,
    /// `H x 2H` recurrent weights for r and z.
    pub u_rz: usize,
    /// `H x H` recurrent weights for n.
    pub u_n: usize,
    pub inputs: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let wx = store.add_uniform(format!("{name}.wx"), vec![inputs, 3 * hidden], inputs, 1.0, rng);
        let b = store.add_zeros(format!("{name}.b"), vec![3 * hidden]);
        let u_rz = store.add_orthogonal(format!("{name}.u_rz"), hidden, 2 * hidden, 1.0, rng);
        let u_n = store.add_orthogonal(format!("{name}.u_n"), hidden, hidden, 1.0, rng);
        Gru {
            wx,
            b,
            u_rz,
            u_n,
            inputs,
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, h: Var) -> Var {
        let hd = self.hidden;
        let (wx, b, u_rz, u_n) = (g.param(self.wx), g.param(self.b), g.param(self.u_rz), g.param(self.u_n));
        let xs = g.affine(x, wx, b);
        let hs = g.matmul(h, u_rz);
        let xr = g.slice_cols(xs, 0, hd);
        let xz = g.slice_cols(xs, hd, hd);
        let xn = g.slice_cols(xs, 2 * hd, hd);
        let hr = g.slice_cols(hs, 0, hd);
        let hz = g.slice_cols(hs, hd, hd);
        let r_pre = g.add(xr, hr);
        let r = g.sigmoid(r_pre);
        let z_pre = g.add(xz, hz);
        let z = g.sigmoid(z_pre);
        let rh = g.mul(r, h);
        let un = g.matmul(rh, u_n);
        let n_pre = g.add(xn, un);
        let n = g.tanh(n_pre);
        let diff = g.sub(n, h);
        let step = g.mul(z, diff);
        g.add(h, step)
    }
}

/// Depth encoder: conv(16,k5,s2) -> maxpool2 -> conv(32,k4,s2) -> conv(32,k3,s1) -> affine.
#[derive(Clone, Debug, PartialEq)]
pub struct Cnn {
    pub convs: Vec<(usize, usize, ConvShape)>,
    /// Pool after the conv with this index.
    pub pool_after: usize,
    pub pool: PoolShape,
    pub head: Linear,
    pub input_rows: usize,
    pub input_cols: usize,
}

pub const CNN_CHANNELS: [usize; 3] = [16, 32, 32];
pub const CNN_KERNELS: [usize; 3] = [5, 4, 3];
pub const CNN_STRIDES: [usize; 3] = [2, 2, 1];

impl Cnn {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, cols: usize, embed: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut convs = Vec::new();
        let (mut c, mut h, mut w) = (1usize, rows, cols);
        let mut pool = PoolShape { c: 0, h_in: 0, w_in: 0 };
        for i in 0..3 {
            let shape = ConvShape {
                c_in: c,
                h_in: h,
                w_in: w,
                c_out: CNN_CHANNELS[i],
                kernel: CNN_KERNELS[i],
                stride: CNN_STRIDES[i],
            };
            if !shape.valid() {
                return Err(Error::Contract(format!("depth image {rows}x{cols} too small for conv {i}")));
            }
            let fan_in = c * shape.kernel * shape.kernel;
            let wi = store.add_uniform(format!("{name}.conv{i}.w"), vec![shape.c_out, c, shape.kernel, shape.kernel], fan_in, 1.0, rng);
            let bi = store.add_zeros(format!("{name}.conv{i}.b"), vec![shape.c_out]);
            convs.push((wi, bi, shape));
            c = shape.c_out;
            h = shape.h_out();
            w = shape.w_out();
            if i == 0 {
                pool = PoolShape { c, h_in: h, w_in: w };
                h /= 2;
                w /= 2;
            }
        }
        let flat = c * h * w;
        if flat == 0 {
            return Err(Error::Contract("CNN feature map collapsed to zero size".into()));
        }
        let head = Linear::new(store, &format!("{name}.head"), flat, embed, 1.0, rng);
        Ok(Cnn {
            convs,
            pool_after: 0,
            pool,
            head,
            input_rows: rows,
            input_cols: cols,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut y = x;
        for (i, (w, b, shape)) in self.convs.iter().enumerate() {
            let (w, b) = (g.param(*w), g.param(*b));
            y = g.conv2d(y, w, b, *shape);
            y = g.celu(y);
            if i == self.pool_after {
                y = g.max_pool2(y, self.pool);
            }
        }
        self.head.forward(g, y)
    }

    pub fn flat_features(&self) -> usize {
        self.head.inputs
    }
}

fn check_cols(t: &Tensor, cols: usize, what: &str) -> Result<()> {
    if t.cols != cols {
        return Err(Error::Contract(format!("{what}: expected {cols} columns, got {}", t.cols)));
    }
    Ok(())
}

pub fn mlp_forward(store: &ParamStore, mlp: &Mlp, input: &Tensor) -> Result<Tensor> {
    check_cols(input, mlp.inputs(), "mlp input")?;
    let mut g = Graph::new(store);
    let x = g.input(input.clone());
    let y = mlp.forward(&mut g, x);
    Ok(g.value(y).clone())
}

pub fn gru_forward(store: &ParamStore, gru: &Gru, input: &Tensor, hidden: &Tensor) -> Result<(Tensor, Tensor)> {
    check_cols(input, gru.inputs, "gru input")?;
    check_cols(hidden, gru.hidden, "gru hidden")?;
    if input.rows != hidden.rows {
        return Err(Error::Contract("gru input and hidden batch sizes differ".into()));
    }
    let mut g = Graph::new(store);
    let x = g.input(input.clone());
    let h = g.input(hidden.clone());
    let y = gru.forward(&mut g, x, h);
    let out = g.value(y).clone();
    Ok((out.clone(), out))
}

pub fn cnn_forward(store: &ParamStore, cnn: &Cnn, images: &Tensor) -> Result<Tensor> {
    check_cols(images, cnn.input_rows * cnn.input_cols, "cnn input")?;
    let mut g = Graph::new(store);
    let x = g.input(images.clone());
    let y = cnn.forward(&mut g, x);
    Ok(g.value(y).clone())
}
