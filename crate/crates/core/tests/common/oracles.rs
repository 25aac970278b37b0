//! Independent reference implementations used to check the numeric core.
//! Written directly from the defining sums, sharing no code with the library kernels.

#![allow(dead_code)]

use drivelab::tensor_nn::{LayerSpec, Network, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Leading pad for TF-style "same": total = max((ceil(n/s)-1)*s + k - n, 0), front gets the floor half.
fn same_pad(n: usize, k: usize, s: usize) -> (usize, i64) {
    let out = n.div_ceil(s);
    let total = ((out as i64 - 1) * s as i64 + k as i64 - n as i64).max(0);
    (out, total / 2)
}

fn out_and_pad(n: usize, k: usize, s: usize, same: bool) -> (usize, i64) {
    if same {
        same_pad(n, k, s)
    } else {
        ((n - k) / s + 1, 0)
    }
}

/// input [H,W,Cin], kernel [kh,kw,Cin,Cout]
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: [usize; 2],
    same: bool,
) -> Tensor {
    let (h, w, cin) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (kh, kw, cout) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[3]);
    let (oh, ph) = out_and_pad(h, kh, stride[0], same);
    let (ow, pw) = out_and_pad(w, kw, stride[1], same);
    let x = |y: i64, xx: i64, c: usize| -> f64 {
        if y < 0 || xx < 0 || y >= h as i64 || xx >= w as i64 {
            0.0
        } else {
            input.data()[(y as usize * w + xx as usize) * cin + c]
        }
    };
    let k =
        |a: usize, b: usize, c: usize, o: usize| kernel.data()[((a * kw + b) * cin + c) * cout + o];
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut s = bias[co];
                for a in 0..kh {
                    for b in 0..kw {
                        for c in 0..cin {
                            let iy = (oy * stride[0] + a) as i64 - ph;
                            let ix = (ox * stride[1] + b) as i64 - pw;
                            s += x(iy, ix, c) * k(a, b, c, co);
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = s;
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out).unwrap()
}

/// input [T,H,W,Cin], kernel [kt,kh,kw,Cin,Cout]
pub fn conv3d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: [usize; 3],
    same: bool,
) -> Tensor {
    let s = input.shape();
    let (t, h, w, cin) = (s[0], s[1], s[2], s[3]);
    let ks = kernel.shape();
    let (kt, kh, kw, cout) = (ks[0], ks[1], ks[2], ks[4]);
    let (ot, pt) = out_and_pad(t, kt, stride[0], same);
    let (oh, ph) = out_and_pad(h, kh, stride[1], same);
    let (ow, pw) = out_and_pad(w, kw, stride[2], same);
    let mut out = vec![0.0; ot * oh * ow * cout];
    for o_t in 0..ot {
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = bias[co];
                    for a in 0..kt {
                        for b in 0..kh {
                            for c in 0..kw {
                                for ci in 0..cin {
                                    let it = (o_t * stride[0] + a) as i64 - pt;
                                    let iy = (oy * stride[1] + b) as i64 - ph;
                                    let ix = (ox * stride[2] + c) as i64 - pw;
                                    if it < 0
                                        || iy < 0
                                        || ix < 0
                                        || it >= t as i64
                                        || iy >= h as i64
                                        || ix >= w as i64
                                    {
                                        continue;
                                    }
                                    let xv = input.data()[((it as usize * h + iy as usize) * w
                                        + ix as usize)
                                        * cin
                                        + ci];
                                    let kv = kernel.data()
                                        [(((a * kh + b) * kw + c) * cin + ci) * cout + co];
                                    acc += xv * kv;
                                }
                            }
                        }
                    }
                    out[((o_t * oh + oy) * ow + ox) * cout + co] = acc;
                }
            }
        }
    }
    Tensor::new(vec![ot, oh, ow, cout], out).unwrap()
}

pub fn dense(x: &[f64], w: &Tensor, b: &[f64]) -> Vec<f64> {
    let (n, m) = (w.shape()[0], w.shape()[1]);
    (0..m)
        .map(|j| b[j] + (0..n).map(|i| x[i] * w.data()[i * m + j]).sum::<f64>())
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One ConvLSTM step transcribed from the gate equations:
/// i,f,o = sigmoid(Wx*x + Wh*h + b), g = tanh(...), c = f.c_prev + i.g, h = o.tanh(c).
/// Gate blocks within the 4F channels are ordered i, f, g, o.
pub fn convlstm_step(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    wx: &Tensor,
    wh: &Tensor,
    b: &[f64],
) -> (Tensor, Tensor) {
    let f = c.shape()[2];
    let zero = vec![0.0; 4 * f];
    let zx = conv2d(x, wx, b, [1, 1], true);
    let zh = conv2d(h, wh, &zero, [1, 1], true);
    let (hh, ww) = (x.shape()[0], x.shape()[1]);
    let mut h_new = vec![0.0; hh * ww * f];
    let mut c_new = vec![0.0; hh * ww * f];
    for y in 0..hh {
        for xx in 0..ww {
            for j in 0..f {
                let pre = |gate: usize| {
                    let idx = (y * ww + xx) * 4 * f + gate * f + j;
                    zx.data()[idx] + zh.data()[idx]
                };
                let (ig, fg, gg, og) = (sig(pre(0)), sig(pre(1)), pre(2).tanh(), sig(pre(3)));
                let idx = (y * ww + xx) * f + j;
                c_new[idx] = fg * c.data()[idx] + ig * gg;
                h_new[idx] = og * c_new[idx].tanh();
            }
        }
    }
    let shape = vec![hh, ww, f];
    (
        Tensor::new(shape.clone(), h_new).unwrap(),
        Tensor::new(shape, c_new).unwrap(),
    )
}

/// Relative error with a floor so that vanishing components compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error between analytic gradients (parameters and input) and
/// central finite differences of L = sum(y * probe).
pub fn gradient_check(
    net: &Network,
    params: &ParamSet,
    x: &Tensor,
    probe: &Tensor,
    step: f64,
) -> f64 {
    let loss = |p: &ParamSet, x: &Tensor| -> f64 {
        let y = net.forward(p, x).unwrap();
        y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
    };
    let (_, gin, gparams) = net.backward_sample(params, x, probe).unwrap();
    let mut worst = 0.0f64;
    for ti in 0..params.len() {
        for k in 0..params.tensors()[ti].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti].data_mut()[k] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].data_mut()[k] -= step;
            let fd = (loss(&plus, x) - loss(&minus, x)) / (2.0 * step);
            worst = worst.max(rel_err(gparams.tensors()[ti].data()[k], fd));
        }
    }
    for k in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[k] += step;
        let mut minus = x.clone();
        minus.data_mut()[k] -= step;
        let fd = (loss(params, &plus) - loss(params, &minus)) / (2.0 * step);
        worst = worst.max(rel_err(gin.data()[k], fd));
    }
    worst
}

/// Smallest distance of any ReLU pre-activation from its kink, or of any pooling
/// window's runner-up from its max; finite differences are unreliable below the step.
pub fn kink_margin(net: &Network, params: &ParamSet, x: &Tensor) -> f64 {
    let layers = net.layers();
    let mut act = x.clone();
    let mut margin = f64::INFINITY;
    for (i, layer) in layers.iter().enumerate() {
        let sub = Network::new(act.shape(), vec![layer.clone()]).unwrap();
        let keys: Vec<_> = params.iter().filter(|(k, _)| k.layer == i).collect();
        let sub_params = ParamSet::new(
            keys.iter()
                .map(|(k, t)| {
                    (
                        drivelab::tensor_nn::ParamKey {
                            layer: 0,
                            role: k.role,
                        },
                        (*t).clone(),
                    )
                })
                .collect(),
        );
        match layer {
            LayerSpec::Relu => {
                margin = margin.min(act.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
            }
            LayerSpec::Maxpool2d { .. } | LayerSpec::Maxpool3d { .. } => {
                margin = margin.min(pool_gap(layer, &act));
            }
            LayerSpec::TimeDistributed { layer: inner }
                if matches!(**inner, LayerSpec::Maxpool2d { .. }) =>
            {
                for t in 0..act.shape()[0] {
                    margin = margin.min(pool_gap(inner, &act.outer(t)));
                }
            }
            _ => {}
        }
        act = sub.forward(&sub_params, &act).unwrap();
    }
    margin
}

fn pool_gap(layer: &LayerSpec, x: &Tensor) -> f64 {
    let (window, stride, shape) = match layer {
        LayerSpec::Maxpool2d { window, stride } => {
            let s = x.shape();
            (
                [1, window[0], window[1]],
                [1, stride[0], stride[1]],
                [1, s[0], s[1], s[2]],
            )
        }
        LayerSpec::Maxpool3d { window, stride } => {
            let s = x.shape();
            (*window, *stride, [s[0], s[1], s[2], s[3]])
        }
        _ => unreachable!(),
    };
    let mut gap = f64::INFINITY;
    let o: Vec<usize> = (0..3)
        .map(|a| (shape[a] - window[a]) / stride[a] + 1)
        .collect();
    for t in 0..o[0] {
        for y in 0..o[1] {
            for xx in 0..o[2] {
                for c in 0..shape[3] {
                    let mut vals = Vec::new();
                    for a in 0..window[0] {
                        for b in 0..window[1] {
                            for d in 0..window[2] {
                                let (it, iy, ix) =
                                    (t * stride[0] + a, y * stride[1] + b, xx * stride[2] + d);
                                vals.push(
                                    x.data()[((it * shape[1] + iy) * shape[2] + ix) * shape[3] + c],
                                );
                            }
                        }
                    }
                    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    if vals.len() > 1 {
                        gap = gap.min(vals[0] - vals[1]);
                    }
                }
            }
        }
    }
    gap
}

use drivelab::tensor_nn::Padding;

fn conv(filters: usize, k: usize, s: usize, padding: Padding) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel: [k, k],
        stride: [s, s],
        padding,
    }
}

/// One small network per layer kind, each on a 6x6 spatial input.
pub fn gradient_cases() -> Vec<(&'static str, Network)> {
    let head = |mut v: Vec<LayerSpec>| {
        v.push(LayerSpec::Flatten);
        v.push(LayerSpec::Dense { units: 2 });
        v
    };
    let cases: Vec<(&'static str, Vec<usize>, Vec<LayerSpec>)> = vec![
        (
            "conv2d",
            vec![6, 6, 2],
            head(vec![conv(3, 3, 1, Padding::Valid)]),
        ),
        (
            "conv2d_same_stride2",
            vec![6, 6, 2],
            head(vec![conv(2, 3, 2, Padding::Same)]),
        ),
        (
            "conv3d",
            vec![3, 6, 6, 2],
            head(vec![LayerSpec::Conv3d {
                filters: 2,
                kernel: [2, 3, 3],
                stride: [1, 2, 2],
                padding: Padding::Same,
            }]),
        ),
        (
            "convlstm2d",
            vec![3, 6, 6, 2],
            head(vec![
                LayerSpec::Convlstm2d {
                    filters: 2,
                    kernel: [3, 3],
                    return_sequences: true,
                },
                LayerSpec::Convlstm2d {
                    filters: 2,
                    kernel: [3, 3],
                    return_sequences: false,
                },
            ]),
        ),
        (
            "convlstm2d_single_frame",
            vec![6, 6, 1],
            head(vec![LayerSpec::Convlstm2d {
                filters: 2,
                kernel: [3, 3],
                return_sequences: false,
            }]),
        ),
        (
            "dense",
            vec![6, 6, 1],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4 },
                LayerSpec::Dense { units: 2 },
            ],
        ),
        (
            "relu",
            vec![6, 6, 1],
            head(vec![conv(2, 3, 1, Padding::Valid), LayerSpec::Relu]),
        ),
        (
            "tanh",
            vec![6, 6, 1],
            head(vec![conv(2, 3, 1, Padding::Valid), LayerSpec::Tanh]),
        ),
        (
            "sigmoid",
            vec![6, 6, 1],
            head(vec![conv(2, 3, 1, Padding::Valid), LayerSpec::Sigmoid]),
        ),
        (
            "maxpool2d",
            vec![6, 6, 1],
            head(vec![
                conv(2, 3, 1, Padding::Same),
                LayerSpec::Maxpool2d {
                    window: [2, 2],
                    stride: [2, 2],
                },
            ]),
        ),
        (
            "maxpool3d",
            vec![2, 6, 6, 1],
            head(vec![
                LayerSpec::Conv3d {
                    filters: 2,
                    kernel: [1, 3, 3],
                    stride: [1, 1, 1],
                    padding: Padding::Same,
                },
                LayerSpec::Maxpool3d {
                    window: [2, 2, 2],
                    stride: [1, 2, 2],
                },
            ]),
        ),
        (
            "flatten",
            vec![6, 6, 2],
            vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2 }],
        ),
        (
            "time_distributed_conv2d",
            vec![3, 6, 6, 2],
            head(vec![LayerSpec::TimeDistributed {
                layer: Box::new(conv(2, 3, 2, Padding::Valid)),
            }]),
        ),
        (
            "time_distributed_maxpool2d",
            vec![3, 6, 6, 1],
            head(vec![
                LayerSpec::TimeDistributed {
                    layer: Box::new(conv(2, 3, 1, Padding::Same)),
                },
                LayerSpec::TimeDistributed {
                    layer: Box::new(LayerSpec::Maxpool2d {
                        window: [2, 2],
                        stride: [2, 2],
                    }),
                },
            ]),
        ),
        (
            "command_head",
            vec![6, 6, 1],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2 },
                LayerSpec::CommandHead,
            ],
        ),
    ];
    cases
        .into_iter()
        .map(|(name, shape, layers)| (name, Network::new(&shape, layers).unwrap()))
        .collect()
}

/// Draws parameters/inputs (biases randomized too) until no ReLU or pooling kink
/// lies within `margin`, then returns the worst finite-difference relative error.
pub fn checked_gradient_error(net: &Network, seed: u64, step: f64) -> f64 {
    for attempt in 0..50u64 {
        let mut r = rng(seed.wrapping_mul(1000).wrapping_add(attempt));
        let mut params = net.init_params(r.random());
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
        let x = random_tensor(&mut r, net.input_shape());
        let probe = random_tensor(&mut r, net.output_shape());
        if kink_margin(net, &params, &x) > 1e-3 {
            return gradient_check(net, &params, &x, &probe, step);
        }
    }
    panic!("could not draw a kink-free instance");
}
