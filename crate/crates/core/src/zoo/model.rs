use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;

use super::{LayerSpec, ModelSpec, ZooError};
use crate::corpus::EncodedBatch;
use crate::layers::{
    dropout, Bidirectional, Conv1d, Dense, DropoutMode, Embedding, Lstm, Mode, SeparableConv1d,
    Stream,
};
use crate::tensor::{Graph, Objective, ParamStore, Scalar, Tensor, TensorError, Var};
use crate::train::BCE_EPSILON;

#[derive(Debug, Clone)]
enum Built {
    Embedding(Embedding),
    Lstm(Lstm, bool),
    BiLstm(Bidirectional, bool),
    Conv(Conv1d),
    Separable(SeparableConv1d),
    MaxPool { width: usize, stride: usize },
    GlobalMaxPool,
    Dropout(f64),
    Flatten,
    Dense(Dense),
}

/// A spec with its parameters and the stream that drives dropout.
#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    params: ParamStore<T>,
    layers: Vec<Built>,
    stochastic: Stream,
}

impl<T: Scalar> Model<T> {
    /// Draws parameters from `seed_init` in plan order; `seed_stochastic`
    /// seeds the dropout stream. Equal seeds give bit-identical models.
    pub fn build(spec: &ModelSpec, seed_init: u64, seed_stochastic: u64) -> Result<Self, ZooError> {
        if !spec.model_id.is_neural() {
            return Err(ZooError::NotNeural);
        }
        spec.validate()?;
        let mut init = Stream::seed_from_u64(seed_init);
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut channels = 0;
        for (i, layer) in spec.layers.iter().enumerate() {
            let name = format!("{:02}_{}", i, layer.kind());
            let store = &mut params;
            let rng = &mut init;
            let built = match *layer {
                LayerSpec::Embedding { rows, dim } => {
                    channels = dim;
                    Built::Embedding(Embedding::new(store, &name, rows, dim, rng))
                }
                LayerSpec::Lstm {
                    units,
                    return_sequences,
                    input_dropout,
                    recurrent_dropout,
                } => {
                    let l = Lstm::new(
                        store,
                        &name,
                        channels,
                        units,
                        input_dropout,
                        recurrent_dropout,
                        rng,
                    );
                    channels = units;
                    Built::Lstm(l, return_sequences)
                }
                LayerSpec::BiLstm {
                    units,
                    return_sequences,
                    input_dropout,
                    recurrent_dropout,
                } => {
                    let f = Lstm::new(
                        store,
                        &format!("{name}.forward"),
                        channels,
                        units,
                        input_dropout,
                        recurrent_dropout,
                        rng,
                    );
                    let b = Lstm::new(
                        store,
                        &format!("{name}.backward"),
                        channels,
                        units,
                        input_dropout,
                        recurrent_dropout,
                        rng,
                    );
                    channels = 2 * units;
                    Built::BiLstm(Bidirectional::new(f, b)?, return_sequences)
                }
                LayerSpec::Conv1d { filters, width } => {
                    let c = Conv1d::new(store, &name, channels, filters, width, rng);
                    channels = filters;
                    Built::Conv(c)
                }
                LayerSpec::SeparableConv1d { filters, width } => {
                    let c = SeparableConv1d::new(store, &name, channels, filters, width, rng);
                    channels = filters;
                    Built::Separable(c)
                }
                LayerSpec::MaxPool { width, stride } => Built::MaxPool { width, stride },
                LayerSpec::GlobalMaxPool => Built::GlobalMaxPool,
                LayerSpec::Dropout { rate } => Built::Dropout(rate),
                LayerSpec::Flatten => {
                    // spec validation guarantees the shapes, so the flat width
                    // is recomputed here from the plan prefix
                    let (shape, _) = super::infer(&spec.layers[..=i], spec.max_len)?;
                    if let super::Shape::Flat(n) = shape {
                        channels = n;
                    }
                    Built::Flatten
                }
                LayerSpec::Dense { units, activation } => {
                    let d = Dense::new(store, &name, channels, units, activation, rng);
                    channels = units;
                    Built::Dense(d)
                }
            };
            layers.push(built);
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            layers,
            stochastic: Stream::seed_from_u64(seed_stochastic),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn stochastic(&self) -> &Stream {
        &self.stochastic
    }

    pub fn stochastic_mut(&mut self) -> &mut Stream {
        &mut self.stochastic
    }

    /// Runs the plan on `graph` with `p` bound one-to-one to the parameter
    /// store, returning the `[n]` probability node.
    pub fn forward_with<U: Scalar>(
        &self,
        graph: &mut Graph<U>,
        p: &[Var],
        batch: &EncodedBatch,
        mode: &mut Mode,
    ) -> Result<Var, ZooError> {
        run(&self.layers, &self.spec, graph, p, batch, mode)
    }

    /// Binds the parameters to `graph` and runs a forward pass, drawing any
    /// dropout masks from the model's own stream when `training`.
    pub fn forward_graph(
        &mut self,
        graph: &mut Graph<T>,
        batch: &EncodedBatch,
        training: bool,
    ) -> Result<(Vec<Var>, Var), ZooError> {
        let p = self.params.bind(graph);
        let mut mode = if training {
            Mode::Train(&mut self.stochastic)
        } else {
            Mode::Eval
        };
        let out = run(&self.layers, &self.spec, graph, &p, batch, &mut mode)?;
        Ok((p, out))
    }

    /// Probabilities in evaluation mode, without recording gradients.
    pub fn predict(&self, batch: &EncodedBatch) -> Result<Vec<T>, ZooError> {
        let mut g = Graph::untracked();
        let p = self.params.bind(&mut g);
        let out = self.forward_with(&mut g, &p, batch, &mut Mode::Eval)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Probabilities for `batch`; a training pass advances the dropout
    /// stream.
    pub fn forward(&mut self, batch: &EncodedBatch, training: bool) -> Result<Vec<T>, ZooError> {
        let mut g = Graph::untracked();
        let (_, out) = self.forward_graph(&mut g, batch, training)?;
        Ok(g.value(out).data().to_vec())
    }
}

/// Mean cross-entropy of a model on a fixed batch as a function of its
/// parameters, in store order; the objective of the composed gradient checks.
///
/// With `stream` set, every evaluation runs in training mode with dropout
/// masks drawn from a fresh clone of it, so all evaluations share masks.
pub struct BatchLoss<'a, T: Scalar> {
    model: &'a Model<T>,
    batch: &'a EncodedBatch,
    targets: Vec<f64>,
    stream: Option<Stream>,
}

impl<'a, T: Scalar> BatchLoss<'a, T> {
    pub fn new(
        model: &'a Model<T>,
        batch: &'a EncodedBatch,
        stream: Option<Stream>,
    ) -> Result<Self, ZooError> {
        // surfaces batch errors here, where they keep their type
        model.predict(batch)?;
        Ok(Self {
            model,
            batch,
            targets: batch.labels().iter().map(|&l| f64::from(l)).collect(),
            stream,
        })
    }

    /// Current parameter values, in the order `eval` expects them.
    pub fn inputs(&self) -> Vec<Tensor<f64>> {
        let p = self.model.params();
        p.ids().map(|id| p.value(id).cast()).collect()
    }
}

impl<T: Scalar> Objective for BatchLoss<'_, T> {
    fn eval<U: Scalar>(&self, g: &mut Graph<U>, inputs: &[Var]) -> Result<Var, TensorError> {
        let mut stream = self.stream.clone();
        let mut mode = match stream.as_mut() {
            Some(s) => Mode::Train(s),
            None => Mode::Eval,
        };
        let out = self
            .model
            .forward_with(g, inputs, self.batch, &mut mode)
            .map_err(|e| match e {
                ZooError::Tensor(t) => t,
                _ => TensorError::Invalid {
                    op: "batch loss",
                    reason: "batch does not fit the model",
                },
            })?;
        let targets: Vec<U> = self.targets.iter().map(|&t| U::of(t)).collect();
        g.bce(out, &targets, U::of(BCE_EPSILON))
    }
}

fn run<T: Scalar>(
    layers: &[Built],
    spec: &ModelSpec,
    g: &mut Graph<T>,
    p: &[Var],
    batch: &EncodedBatch,
    mode: &mut Mode,
) -> Result<Var, ZooError> {
    if batch.max_len() != spec.max_len {
        return Err(ZooError::LengthMismatch {
            expected: spec.max_len,
            got: batch.max_len(),
        });
    }
    let rows = spec.embedding_rows();
    if let Some(&index) = batch.ids().iter().find(|&&i| i >= rows) {
        return Err(ZooError::TokenOutOfRange { index, rows });
    }
    let n = batch.n_docs();
    let mut x: Option<Var> = None;
    for layer in layers {
        let cur = || x.expect("embedding comes first");
        x = Some(match layer {
            Built::Embedding(e) => e.forward(g, p, batch.ids(), n, spec.max_len)?,
            Built::Lstm(l, seq) => l.forward(g, p, cur(), *seq, mode)?,
            Built::BiLstm(b, seq) => b.forward(g, p, cur(), *seq, mode)?,
            Built::Conv(c) => c.forward(g, p, cur())?,
            Built::Separable(c) => c.forward(g, p, cur())?,
            Built::MaxPool { width, stride } => g.maxpool1d(cur(), *width, *stride)?,
            Built::GlobalMaxPool => g.global_maxpool(cur())?,
            Built::Dropout(rate) => dropout(g, cur(), *rate, DropoutMode::PerElement, mode)?,
            Built::Flatten => {
                let s = g.shape(cur()).to_vec();
                g.reshape(cur(), &[s[0], s[1..].iter().product()])?
            }
            Built::Dense(d) => d.forward(g, p, cur())?,
        });
    }
    Ok(g.reshape(x.expect("plan is non-empty"), &[n])?)
}
