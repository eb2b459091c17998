use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Sigmoid,
    Tanh,
    Softmax,
    Identity,
}

/// One layer of a feed-forward network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv {
        filters: usize,
        stride: usize,
        filter: [usize; 2],
        activation: Activation,
    },
    FullyConnected {
        units: usize,
        activation: Activation,
    },
    Dropout {
        keep_prob: f32,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, stride: usize, fh: usize, fw: usize, activation: Activation) -> Self {
        LayerSpec::Conv {
            filters,
            stride,
            filter: [fh, fw],
            activation,
        }
    }

    pub fn fc(units: usize, activation: Activation) -> Self {
        LayerSpec::FullyConnected { units, activation }
    }

    pub fn dropout(keep_prob: f32) -> Self {
        LayerSpec::Dropout { keep_prob }
    }
}

/// Declarative feed-forward network `F: R^d -> R^l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `(C,H,W)`, `(H,W)` or `(V)`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    /// Divide each input by `max(sum, 1)` before the first layer
    /// (averaging bag-of-words counts).
    #[serde(default)]
    pub normalize_input: bool,
}

/// Shape of the activations flowing between layers, without the batch axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Flow {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Flow {
    fn features(&self) -> usize {
        match *self {
            Flow::Spatial { c, h, w } => c * h * w,
            Flow::Flat(n) => n,
        }
    }
}

/// Parameter shapes a layer owns: `(weight, bias)`.
pub(crate) struct LayerParams {
    pub weight: Vec<usize>,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            input_shape,
            layers,
            normalize_input: false,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub(crate) fn input_flow(&self) -> Result<Flow> {
        match self.input_shape[..] {
            [n] if n > 0 => Ok(Flow::Flat(n)),
            [h, w] if h > 0 && w > 0 => Ok(Flow::Spatial { c: 1, h, w }),
            [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Flow::Spatial { c, h, w }),
            _ => Err(LanError::Config(format!(
                "unsupported input shape {:?}",
                self.input_shape
            ))),
        }
    }

    /// Walks the layers, checking that shapes compose. Returns the flow
    /// entering each layer followed by the final flow, and the parameter
    /// shapes of every parameterised layer.
    pub(crate) fn trace(&self) -> Result<(Vec<Flow>, Vec<Option<LayerParams>>)> {
        if self.layers.is_empty() {
            return Err(LanError::Config("network has no layers".into()));
        }
        let mut flow = self.input_flow()?;
        let mut flows = vec![flow.clone()];
        let mut params = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    filters,
                    stride,
                    filter: [fh, fw],
                    ..
                } => {
                    let Flow::Spatial { c, h, w } = flow else {
                        return Err(LanError::Config(format!(
                            "layer {i}: convolution needs spatial input"
                        )));
                    };
                    if filters == 0 || stride == 0 || fh == 0 || fw == 0 || fh > h || fw > w {
                        return Err(LanError::Config(format!(
                            "layer {i}: conv {filters} filters {fh}x{fw} stride {stride} does not fit {h}x{w}"
                        )));
                    }
                    params.push(Some(LayerParams {
                        weight: vec![filters, c, fh, fw],
                        bias: filters,
                        fan_in: c * fh * fw,
                        fan_out: filters * fh * fw,
                    }));
                    flow = Flow::Spatial {
                        c: filters,
                        h: (h - fh) / stride + 1,
                        w: (w - fw) / stride + 1,
                    };
                }
                LayerSpec::FullyConnected { units, .. } => {
                    if units == 0 {
                        return Err(LanError::Config(format!("layer {i}: zero units")));
                    }
                    let inputs = flow.features();
                    params.push(Some(LayerParams {
                        weight: vec![inputs, units],
                        bias: units,
                        fan_in: inputs,
                        fan_out: units,
                    }));
                    flow = Flow::Flat(units);
                }
                LayerSpec::Dropout { keep_prob } => {
                    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
                        return Err(LanError::Config(format!(
                            "layer {i}: keep probability {keep_prob} outside (0,1]"
                        )));
                    }
                    params.push(None);
                }
            }
            flows.push(flow.clone());
        }
        Ok((flows, params))
    }

    pub fn validate(&self) -> Result<()> {
        self.trace().map(|_| ())
    }

    /// Number of outputs of the final layer.
    pub fn output_dim(&self) -> Result<usize> {
        let (flows, _) = self.trace()?;
        Ok(flows.last().expect("at least input flow").features())
    }

    fn head_activation(&self) -> Option<Activation> {
        self.layers.iter().rev().find_map(|l| match *l {
            LayerSpec::Conv { activation, .. } | LayerSpec::FullyConnected { activation, .. } => {
                Some(activation)
            }
            LayerSpec::Dropout { .. } => None,
        })
    }

    /// A classifier ends in a softmax over at least two classes.
    pub fn validate_classifier(&self) -> Result<()> {
        let dim = self.output_dim()?;
        if self.head_activation() != Some(Activation::Softmax) {
            return Err(LanError::Config("classifier head must be softmax".into()));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::FullyConnected { .. })) {
            return Err(LanError::Config("classifier must end in a fully-connected layer".into()));
        }
        if dim < 2 {
            return Err(LanError::Config(format!("classifier needs >= 2 outputs, has {dim}")));
        }
        Ok(())
    }

    /// A mask network ends in a sigmoid.
    pub fn validate_mask_head(&self) -> Result<()> {
        self.validate()?;
        if self.head_activation() != Some(Activation::Sigmoid) {
            return Err(LanError::Config("attention network head must be sigmoid".into()));
        }
        Ok(())
    }
}
