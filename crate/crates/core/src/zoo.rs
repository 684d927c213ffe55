//! The five classifier architectures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Padding};

pub const BN_MOMENTUM: f64 = 0.9;
pub const LKCNN_KERNEL: usize = 100;
pub const LKCNN_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchitectureId {
    ShallowNet,
    Mlp,
    Fcn,
    ResNet,
    Lkcnn,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 5] = [
        ArchitectureId::ShallowNet,
        ArchitectureId::Mlp,
        ArchitectureId::Fcn,
        ArchitectureId::ResNet,
        ArchitectureId::Lkcnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchitectureId::ShallowNet => "shallownet",
            ArchitectureId::Mlp => "mlp",
            ArchitectureId::Fcn => "fcn",
            ArchitectureId::ResNet => "resnet",
            ArchitectureId::Lkcnn => "lkcnn",
        }
    }

    /// Table label, e.g. "ShallowNet", "LKCNN".
    pub fn label(self) -> &'static str {
        match self {
            ArchitectureId::ShallowNet => "ShallowNet",
            ArchitectureId::Mlp => "MLP",
            ArchitectureId::Fcn => "FCN",
            ArchitectureId::ResNet => "ResNet",
            ArchitectureId::Lkcnn => "LKCNN",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<ArchitectureId> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown architecture '{s}'")))
    }
}

/// An architecture together with its tunable hyperparameters (only LKCNN has any).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub id: ArchitectureId,
    pub kernel: usize,
    pub channels: usize,
}

impl Architecture {
    pub fn new(id: ArchitectureId) -> Architecture {
        Architecture {
            id,
            kernel: LKCNN_KERNEL,
            channels: LKCNN_CHANNELS,
        }
    }

    pub fn lkcnn(kernel: usize, channels: usize) -> Architecture {
        Architecture {
            id: ArchitectureId::Lkcnn,
            kernel,
            channels,
        }
    }

    pub fn specs(&self, input_len: usize) -> Result<Vec<LayerSpec>> {
        match self.id {
            ArchitectureId::ShallowNet => shallownet_specs(input_len),
            ArchitectureId::Mlp => mlp_specs(input_len),
            ArchitectureId::Fcn => fcn_specs(input_len),
            ArchitectureId::ResNet => resnet_specs(input_len),
            ArchitectureId::Lkcnn => lkcnn_specs(input_len, self.kernel, self.channels),
        }
    }

    pub fn build(&self, input_len: usize, seed: u64) -> Result<Network> {
        Network::new((1, input_len), &self.specs(input_len)?, seed)
    }
}

impl From<ArchitectureId> for Architecture {
    fn from(id: ArchitectureId) -> Self {
        Architecture::new(id)
    }
}

fn need(input_len: usize, min: usize, what: &str) -> Result<()> {
    if input_len < min {
        return Err(Error::Shape(format!("{what} needs input length >= {min}, got {input_len}")));
    }
    Ok(())
}

fn conv(channels: usize, kernel: usize, padding: Padding, bias: bool) -> LayerSpec {
    LayerSpec::Conv1d { channels, kernel, padding, bias }
}

fn head() -> [LayerSpec; 2] {
    [LayerSpec::Dense { units: 2 }, LayerSpec::Softmax]
}

fn shallownet_specs(input_len: usize) -> Result<Vec<LayerSpec>> {
    need(input_len, 1, "ShallowNet")?;
    let mut s = vec![LayerSpec::Flatten, LayerSpec::Dense { units: 100 }, LayerSpec::Sigmoid];
    s.extend(head());
    Ok(s)
}

fn mlp_specs(input_len: usize) -> Result<Vec<LayerSpec>> {
    need(input_len, 1, "MLP")?;
    let mut s = vec![LayerSpec::Flatten, LayerSpec::Dropout { rate: 0.1 }];
    for rate in [0.2, 0.2, 0.3] {
        s.extend([LayerSpec::Dense { units: 500 }, LayerSpec::Relu, LayerSpec::Dropout { rate }]);
    }
    s.extend(head());
    Ok(s)
}

fn fcn_specs(input_len: usize) -> Result<Vec<LayerSpec>> {
    need(input_len, 8, "FCN")?;
    let mut s = Vec::new();
    for (kernel, channels) in [(8, 64), (5, 128), (3, 64)] {
        s.extend([
            conv(channels, kernel, Padding::Same, false),
            LayerSpec::BatchNorm1d { momentum: BN_MOMENTUM },
            LayerSpec::Relu,
        ]);
    }
    s.push(LayerSpec::GlobalAvgPool);
    s.extend(head());
    Ok(s)
}

fn resnet_specs(input_len: usize) -> Result<Vec<LayerSpec>> {
    need(input_len, 8, "ResNet")?;
    let mut s = Vec::new();
    for channels in [64, 128, 128] {
        let block_input = s.len();
        for (i, kernel) in [8, 5, 3].into_iter().enumerate() {
            s.push(conv(channels, kernel, Padding::Same, false));
            s.push(LayerSpec::BatchNorm1d { momentum: BN_MOMENTUM });
            if i < 2 {
                s.push(LayerSpec::Relu);
            }
        }
        s.push(LayerSpec::Add { from: block_input });
        s.push(LayerSpec::Relu);
    }
    s.push(LayerSpec::GlobalAvgPool);
    s.extend(head());
    Ok(s)
}

fn lkcnn_specs(input_len: usize, kernel: usize, channels: usize) -> Result<Vec<LayerSpec>> {
    if kernel == 0 || channels == 0 {
        return Err(Error::Domain(format!("LKCNN kernel {kernel}, channels {channels}")));
    }
    need(input_len, 2 * kernel, "LKCNN")?;
    let mut s = vec![
        conv(channels, kernel, Padding::Valid, true),
        LayerSpec::Relu,
        conv(channels, kernel, Padding::Valid, true),
        LayerSpec::Relu,
        LayerSpec::MaxPool1d { pool: 2 },
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 100 },
        LayerSpec::Relu,
    ];
    s.extend(head());
    Ok(s)
}

pub fn build_shallownet(input_len: usize, seed: u64) -> Result<Network> {
    Architecture::new(ArchitectureId::ShallowNet).build(input_len, seed)
}

pub fn build_mlp(input_len: usize, seed: u64) -> Result<Network> {
    Architecture::new(ArchitectureId::Mlp).build(input_len, seed)
}

pub fn build_fcn(input_len: usize, seed: u64) -> Result<Network> {
    Architecture::new(ArchitectureId::Fcn).build(input_len, seed)
}

pub fn build_resnet(input_len: usize, seed: u64) -> Result<Network> {
    Architecture::new(ArchitectureId::ResNet).build(input_len, seed)
}

pub fn build_lkcnn(input_len: usize, kernel: usize, channels: usize, seed: u64) -> Result<Network> {
    Architecture::lkcnn(kernel, channels).build(input_len, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, CheckConfig, Layer, Mode, Objective, Tensor};

    fn count_bn(net: &Network) -> usize {
        net.layers().iter().filter(|l| matches!(l, Layer::BatchNorm1d(_))).count()
    }

    fn input(b: usize, len: usize) -> Tensor {
        Tensor::from_vec([b, 1, len], (0..b * len).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect()).unwrap()
    }

    #[test]
    fn parameter_counts_at_length_1000() {
        let conv = |ci: usize, co: usize, k: usize, bias: bool| co * ci * k + if bias { co } else { 0 };
        let dense = |n: usize, m: usize| n * m + m;
        let bn = |c: usize| 2 * c;

        assert_eq!(build_shallownet(1000, 0).unwrap().num_params(), 100_302);
        assert_eq!(build_mlp(1000, 0).unwrap().num_params(), dense(1000, 500) + 2 * dense(500, 500) + dense(500, 2));
        let fcn = conv(1, 64, 8, false) + bn(64) + conv(64, 128, 5, false) + bn(128) + conv(128, 64, 3, false) + bn(64) + dense(64, 2);
        assert_eq!(build_fcn(1000, 0).unwrap().num_params(), fcn);
        let block = |ci: usize, c: usize| {
            conv(ci, c, 8, false) + conv(c, c, 5, false) + conv(c, c, 3, false) + 3 * bn(c)
                + if ci != c { conv(ci, c, 1, true) } else { 0 }
        };
        let resnet = block(1, 64) + block(64, 128) + block(128, 128) + dense(128, 2);
        assert_eq!(build_resnet(1000, 0).unwrap().num_params(), resnet);
        let lk = conv(1, 5, 100, true) + conv(5, 5, 100, true) + dense(2005, 100) + dense(100, 2);
        assert_eq!(build_lkcnn(1000, 100, 5, 0).unwrap().num_params(), lk);
    }

    #[test]
    fn shape_traces() {
        let lk = build_lkcnn(1000, 100, 5, 0).unwrap();
        let trace = lk.shape_trace();
        assert_eq!(&trace[..7], &[(1, 1000), (5, 901), (5, 901), (5, 802), (5, 802), (5, 401), (5, 401)]);
        assert_eq!(trace[7], (1, 2005));

        let fcn = build_fcn(1000, 0).unwrap();
        let channels: Vec<usize> = fcn.shape_trace().iter().map(|s| s.0).collect();
        assert_eq!(&channels[..10], &[1, 64, 64, 64, 128, 128, 128, 64, 64, 64]);
        assert!(fcn.shape_trace()[..10].iter().all(|s| s.1 == 1000));
        assert_eq!(fcn.shape_trace()[10], (64, 1));
        assert_eq!(fcn.output_shape(), (1, 2));

        let mlp = build_mlp(1000, 0).unwrap();
        let widths: Vec<usize> =
            mlp.layers().iter().filter_map(|l| if let Layer::Dense(d) = l { Some(d.n_out()) } else { None }).collect();
        assert_eq!(widths, vec![500, 500, 500, 2]);
    }

    #[test]
    fn resnet_projects_exactly_where_channels_change() {
        let net = build_resnet(1000, 0).unwrap();
        let joins: Vec<bool> =
            net.layers().iter().filter_map(|l| if let Layer::Add(a) = l { Some(a.proj.is_some()) } else { None }).collect();
        assert_eq!(joins, vec![true, true, false]);
        let out_channels: Vec<usize> = net
            .layers()
            .iter()
            .zip(net.shape_trace()[1..].iter())
            .filter_map(|(l, s)| matches!(l, Layer::Add(_)).then_some(s.0))
            .collect();
        assert_eq!(out_channels, vec![64, 128, 128]);
    }

    #[test]
    fn batchnorm_structure() {
        assert_eq!(count_bn(&build_lkcnn(1000, 100, 5, 0).unwrap()), 0);
        assert!(count_bn(&build_fcn(1000, 0).unwrap()) >= 3);
        assert!(count_bn(&build_resnet(1000, 0).unwrap()) >= 3);
    }

    #[test]
    fn forward_shapes_and_eval_determinism() {
        let x = input(3, 1000);
        for id in [ArchitectureId::ShallowNet, ArchitectureId::Mlp, ArchitectureId::Lkcnn] {
            let mut net = Architecture::new(id).build(1000, 1).unwrap();
            net.set_mode(Mode::Eval);
            let a = net.forward(&x).unwrap().clone();
            assert_eq!(a.shape(), [3, 1, 2], "{id}");
            assert_eq!(net.forward(&x).unwrap(), &a);
            for row in a.data().chunks(2) {
                assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lkcnn_sweep_instantiations_and_floor() {
        for kernel in (5..=100).step_by(5) {
            assert!(build_lkcnn(1000, kernel, 5, 0).is_ok(), "{kernel}");
        }
        for channels in [1, 5, 10, 25, 50, 100] {
            assert!(build_lkcnn(1000, 100, channels, 0).is_ok());
        }
        assert!(build_lkcnn(200, 100, 5, 0).is_ok());
        assert!(matches!(build_lkcnn(199, 100, 5, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn names_round_trip() {
        for id in ArchitectureId::ALL {
            assert_eq!(id.name().parse::<ArchitectureId>().unwrap(), id);
            assert_eq!(ArchitectureId::from_code(id.code()), Some(id));
        }
        assert!("vgg".parse::<ArchitectureId>().is_err());
    }

    /// Light version of the composed-architecture check (the acceptance suite
    /// runs the full 200-entry subsample at length 200).
    #[test]
    fn composed_gradients_spot_check() {
        let labels = [0, 1, 1, 0];
        for id in ArchitectureId::ALL {
            let mut net = Architecture::new(id).build(200, 5).unwrap();
            let x = input(4, 200);
            let cfg = CheckConfig { per_tensor: 6, seed: 2, ..Default::default() };
            let r = gradient_check(&mut net, &x, &Objective::CrossEntropy(&labels), &cfg).unwrap();
            assert!(r.max_rel_error < 1e-4, "{id}: {r:?}");
        }
    }
}
