//! Miniature FCN and U-net segmentation networks as explicit layer graphs.
//!
//! Both families share one encoder: `depth` stages of two blocks followed by
//! a 2x2 max pool, channels doubling from `base_channels`, then a two-block
//! bottleneck. The U-net decoder mirrors the encoder with nearest-neighbour
//! upsampling and skip concatenation; the FCN decoder scores the bottleneck
//! and every encoder stage with 1x1 heads and fuses them by
//! upsample-and-sum. Switching `with_cff` turns every `bc` block into an
//! `fbc` block and changes nothing else.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::layers::{Block, BlockCache, BlockGrads, BlockKind, BlockOrder, BlockSpec, Mode};
use crate::rng::Rng;
use crate::tensor::{self, conv2d, conv2d_backward, ConvKernel, Padding, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Fcn,
    Unet,
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fcn" => Ok(Self::Fcn),
            "unet" => Ok(Self::Unet),
            _ => Err(format!("unknown network family {s:?} (expected fcn|unet)")),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fcn => "fcn",
            Self::Unet => "unet",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub family: Family,
    pub depth: usize,
    pub base_channels: usize,
    pub with_cff: bool,
    pub cff_kernel_size: usize,
    pub block_order: BlockOrder,
    pub num_classes: usize,
    pub input_channels: usize,
    /// Initialization seed.
    pub seed: u64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            family: Family::Unet,
            depth: 3,
            base_channels: 8,
            with_cff: false,
            cff_kernel_size: 1,
            block_order: BlockOrder::ReluBn,
            num_classes: 4,
            input_channels: 1,
            seed: 0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.input_channels == 0 {
            return Err(Error::invalid("depth, base_channels and input_channels must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes must be at least 2"));
        }
        if !matches!(self.cff_kernel_size, 1 | 3) {
            return Err(Error::invalid(format!("cff_kernel_size must be 1 or 3, got {}", self.cff_kernel_size)));
        }
        Ok(())
    }

    /// `key = value` lines under the `net.` prefix.
    pub fn to_text(&self) -> String {
        format!(
            "net.family = {}\nnet.depth = {}\nnet.base_channels = {}\nnet.cff = {}\nnet.cff_kernel_size = {}\nnet.block_order = {}\nnet.num_classes = {}\nnet.input_channels = {}\nnet.seed = {}\n",
            self.family,
            self.depth,
            self.base_channels,
            if self.with_cff { "on" } else { "off" },
            self.cff_kernel_size,
            self.block_order,
            self.num_classes,
            self.input_channels,
            self.seed
        )
    }

    /// Applies one `net.*` setting. Returns `false` for keys outside the
    /// network namespace.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        match key {
            "net.family" => self.family = value.parse()?,
            "net.depth" => self.depth = num(key, value)?,
            "net.base_channels" => self.base_channels = num(key, value)?,
            "net.cff" => self.with_cff = parse_switch(key, value)?,
            "net.cff_kernel_size" => self.cff_kernel_size = num(key, value)?,
            "net.block_order" => self.block_order = value.parse()?,
            "net.num_classes" => self.num_classes = num(key, value)?,
            "net.input_channels" => self.input_channels = num(key, value)?,
            "net.seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut spec = Self::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| format!("expected key = value, got {line:?}"))?;
            if !spec.set(k.trim(), v.trim())? {
                return Err(format!("unknown key {:?}", k.trim()));
            }
        }
        Ok(spec)
    }
}

pub fn parse_switch(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected on|off, got {value:?}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    Input,
    Block { block: usize, input: usize },
    MaxPool { input: usize },
    Upsample { input: usize },
    Concat { first: usize, second: usize },
    Add { first: usize, second: usize },
    /// 1x1 convolution to class scores.
    Head { head: usize, input: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGraph {
    spec: NetworkSpec,
    nodes: Vec<Node>,
    pub blocks: Vec<Block>,
    pub heads: Vec<ConvKernel>,
    output: usize,
}

enum NodeCache {
    None,
    Block(Box<BlockCache>),
    Pool(Vec<usize>),
    Concat(usize),
}

/// Forward intermediates of one pass, consumed by `backward`.
pub struct Trace {
    outputs: Vec<Tensor>,
    caches: Vec<NodeCache>,
}

impl Trace {
    pub fn logits(&self) -> &Tensor {
        self.outputs.last().expect("non-empty trace")
    }

    pub fn node_output(&self, node: usize) -> &Tensor {
        &self.outputs[node]
    }
}

/// Gradients mirroring the graph's trainable parameters.
#[derive(Clone, Debug)]
pub struct NetGrads {
    pub blocks: Vec<BlockGrads>,
    pub heads: Vec<ConvKernel>,
}

impl NetGrads {
    /// Same order as [`LayerGraph::trainable_mut`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.push(&b.conv.weights);
            out.push(&b.conv.biases);
            out.push(&b.gamma);
            out.push(&b.beta);
            if let Some(c) = &b.cff {
                out.push(&c.weights);
                out.push(&c.biases);
            }
        }
        for h in &self.heads {
            out.push(&h.weights);
            out.push(&h.biases);
        }
        out
    }
}

struct Builder {
    spec: NetworkSpec,
    nodes: Vec<Node>,
    blocks: Vec<Block>,
    heads: Vec<ConvKernel>,
    backbone: Rng,
    gates: Rng,
    head_rng: Rng,
}

impl Builder {
    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn block(&mut self, input: usize, in_ch: usize, out_ch: usize) -> Result<usize> {
        let spec = BlockSpec {
            kind: if self.spec.with_cff { BlockKind::Fbc } else { BlockKind::Bc },
            conv_kernel_size: 3,
            out_channels: out_ch,
            cff_kernel_size: self.spec.cff_kernel_size,
        };
        let b = Block::init(&spec, in_ch, self.spec.block_order, &mut self.backbone, &mut self.gates)?;
        self.blocks.push(b);
        let block = self.blocks.len() - 1;
        Ok(self.push(Node::Block { block, input }))
    }

    fn head(&mut self, input: usize, in_ch: usize) -> usize {
        let k = self.spec.num_classes;
        let std = (1.0 / in_ch as f64).sqrt();
        let rng = &mut self.head_rng;
        self.heads.push(ConvKernel {
            weights: Tensor::from_fn(&[1, 1, in_ch, k], |_| std * rng.normal()),
            biases: Tensor::zeros(&[k]),
        });
        let head = self.heads.len() - 1;
        self.push(Node::Head { head, input })
    }
}

/// Builds the graph for `spec` with seeded parameters. Backbone, gate and
/// head parameters come from separate named streams, so networks that
/// differ only in `with_cff` start from identical backbone values.
pub fn build(spec: &NetworkSpec) -> Result<LayerGraph> {
    spec.validate()?;
    let mut b = Builder {
        spec: spec.clone(),
        nodes: Vec::new(),
        blocks: Vec::new(),
        heads: Vec::new(),
        backbone: Rng::named(spec.seed, "backbone"),
        gates: Rng::named(spec.seed, "cff"),
        head_rng: Rng::named(spec.seed, "head"),
    };
    let c = spec.base_channels;
    let mut cur = b.push(Node::Input);
    let mut ch = spec.input_channels;
    let mut skips = Vec::with_capacity(spec.depth);
    for level in 0..spec.depth {
        let out = c << level;
        cur = b.block(cur, ch, out)?;
        cur = b.block(cur, out, out)?;
        skips.push((cur, out));
        ch = out;
        cur = b.push(Node::MaxPool { input: cur });
    }
    let bottom = c << spec.depth;
    cur = b.block(cur, ch, bottom)?;
    cur = b.block(cur, bottom, bottom)?;
    ch = bottom;
    match spec.family {
        Family::Unet => {
            for &(skip, skip_ch) in skips.iter().rev() {
                let up = b.push(Node::Upsample { input: cur });
                cur = b.push(Node::Concat { first: up, second: skip });
                cur = b.block(cur, ch + skip_ch, skip_ch)?;
                cur = b.block(cur, skip_ch, skip_ch)?;
                ch = skip_ch;
            }
            b.head(cur, ch);
        }
        Family::Fcn => {
            let mut score = b.head(cur, ch);
            for &(skip, skip_ch) in skips.iter().rev() {
                let up = b.push(Node::Upsample { input: score });
                let side = b.head(skip, skip_ch);
                score = b.push(Node::Add { first: up, second: side });
            }
        }
    }
    let output = b.nodes.len() - 1;
    Ok(LayerGraph {
        spec: b.spec,
        nodes: b.nodes,
        blocks: b.blocks,
        heads: b.heads,
        output,
    })
}

impl LayerGraph {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Indices of blocks carrying a filter, in forward order.
    pub fn filtered_blocks(&self) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&k| self.blocks[k].cff.is_some()).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (h, w, c) = x.hwc()?;
        if c != self.spec.input_channels {
            return Err(Error::ChannelMismatch {
                expected: self.spec.input_channels,
                got: c,
            });
        }
        let m = 1usize << self.spec.depth;
        if h % m != 0 || w % m != 0 {
            return Err(Error::Indivisible {
                h,
                w,
                depth: self.spec.depth,
            });
        }
        Ok(())
    }

    pub fn forward_trace(&self, x: &Tensor, mode: Mode) -> Result<Trace> {
        self.check_input(x)?;
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (out, cache) = match *node {
                Node::Input => (x.clone(), NodeCache::None),
                Node::Block { block, input } => {
                    let (y, c) = self.blocks[block].forward(&outputs[input], mode)?;
                    (y, NodeCache::Block(Box::new(c)))
                }
                Node::MaxPool { input } => {
                    let (y, idx) = tensor::maxpool2(&outputs[input])?;
                    (y, NodeCache::Pool(idx))
                }
                Node::Upsample { input } => (tensor::upsample2(&outputs[input])?, NodeCache::None),
                Node::Concat { first, second } => (
                    tensor::concat_channels(&outputs[first], &outputs[second])?,
                    NodeCache::Concat(outputs[first].dims()[2]),
                ),
                Node::Add { first, second } => (tensor::add(&outputs[first], &outputs[second])?, NodeCache::None),
                Node::Head { head, input } => (conv2d(&outputs[input], &self.heads[head], Padding::Same)?, NodeCache::None),
            };
            outputs.push(out);
            caches.push(cache);
        }
        Ok(Trace { outputs, caches })
    }

    /// Class logits `H x W x K`.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut trace = self.forward_trace(x, mode)?;
        Ok(trace.outputs.swap_remove(self.output))
    }

    /// Folds the batch statistics of a train-mode trace into every batch
    /// normalization's running estimates.
    pub fn update_running(&mut self, trace: &Trace) {
        for (node, cache) in self.nodes.iter().zip(&trace.caches) {
            if let (Node::Block { block, .. }, NodeCache::Block(c)) = (node, cache) {
                self.blocks[*block].update_running(c);
            }
        }
    }

    /// Back-propagates `grad_logits` through a trace of this graph.
    pub fn backward(&self, trace: &Trace, grad_logits: &Tensor) -> Result<NetGrads> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[self.output] = Some(grad_logits.clone());
        let mut block_grads: Vec<Option<BlockGrads>> = vec![None; self.blocks.len()];
        let mut head_grads: Vec<Option<ConvKernel>> = vec![None; self.heads.len()];

        fn accumulate(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
            match slot {
                Some(acc) => *acc = tensor::add(acc, &g)?,
                None => *slot = Some(g),
            }
            Ok(())
        }

        for k in (0..self.nodes.len()).rev() {
            let Some(g) = grads[k].take() else { continue };
            match (self.nodes[k], &trace.caches[k]) {
                (Node::Input, _) => {}
                (Node::Block { block, input }, NodeCache::Block(cache)) => {
                    let (gx, bg) = self.blocks[block].backward(&g, cache)?;
                    block_grads[block] = Some(bg);
                    accumulate(&mut grads[input], gx)?;
                }
                (Node::MaxPool { input }, NodeCache::Pool(idx)) => {
                    let gx = tensor::maxpool2_backward(&g, idx, trace.outputs[input].dims())?;
                    accumulate(&mut grads[input], gx)?;
                }
                (Node::Upsample { input }, _) => {
                    accumulate(&mut grads[input], tensor::upsample2_backward(&g)?)?;
                }
                (Node::Concat { first, second }, NodeCache::Concat(split)) => {
                    let (ga, gb) = tensor::split_channels(&g, *split)?;
                    accumulate(&mut grads[first], ga)?;
                    accumulate(&mut grads[second], gb)?;
                }
                (Node::Add { first, second }, _) => {
                    accumulate(&mut grads[first], g.clone())?;
                    accumulate(&mut grads[second], g)?;
                }
                (Node::Head { head, input }, _) => {
                    let (gx, gk) = conv2d_backward(&g, &trace.outputs[input], &self.heads[head], Padding::Same)?;
                    head_grads[head] = Some(gk);
                    accumulate(&mut grads[input], gx)?;
                }
                _ => return Err(Error::invalid(format!("trace does not match node {k}"))),
            }
        }
        let blocks = block_grads
            .into_iter()
            .enumerate()
            .map(|(k, g)| g.ok_or_else(|| Error::invalid(format!("block {k} received no gradient"))))
            .collect::<Result<_>>()?;
        let heads = head_grads
            .into_iter()
            .enumerate()
            .map(|(k, g)| g.ok_or_else(|| Error::invalid(format!("head {k} received no gradient"))))
            .collect::<Result<_>>()?;
        Ok(NetGrads { blocks, heads })
    }

    /// Per-pixel argmax of the eval-mode logits (lowest class on ties).
    pub fn predict(&self, x: &Tensor) -> Result<LabelMap> {
        let logits = self.forward(x, Mode::Eval)?;
        argmax_labels(&logits)
    }

    /// Eval-mode `(f, d)` pairs of every filtered block, in forward order.
    pub fn probe(&self, x: &Tensor) -> Result<Vec<(Tensor, Tensor)>> {
        if self.filtered_blocks().is_empty() {
            return Err(Error::invalid("network has no feature filters to probe"));
        }
        let trace = self.forward_trace(x, Mode::Eval)?;
        let mut out = Vec::new();
        for (k, node) in self.nodes.iter().enumerate() {
            if let (Node::Block { block, .. }, NodeCache::Block(cache)) = (node, &trace.caches[k]) {
                if self.blocks[*block].cff.is_some() {
                    out.push((cache.f.clone(), trace.outputs[k].clone()));
                }
            }
        }
        Ok(out)
    }

    /// Named trainable tensors in a fixed order.
    pub fn trainable(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{k:02}.conv.weights"), &b.conv.weights));
            out.push((format!("block{k:02}.conv.biases"), &b.conv.biases));
            out.push((format!("block{k:02}.bn.gamma"), &b.bn.gamma));
            out.push((format!("block{k:02}.bn.beta"), &b.bn.beta));
            if let Some(c) = &b.cff {
                out.push((format!("block{k:02}.cff.weights"), &c.gate.weights));
                out.push((format!("block{k:02}.cff.biases"), &c.gate.biases));
            }
        }
        for (k, h) in self.heads.iter().enumerate() {
            out.push((format!("head{k:02}.weights"), &h.weights));
            out.push((format!("head{k:02}.biases"), &h.biases));
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors_mut().0
    }

    /// Trainable tensors (in `trainable` order) and running statistics.
    fn tensors_mut(&mut self) -> (Vec<&mut Tensor>, Vec<&mut Tensor>) {
        let mut trainable = Vec::new();
        let mut running = Vec::new();
        for b in &mut self.blocks {
            let Block { conv, bn, cff, .. } = b;
            trainable.push(&mut conv.weights);
            trainable.push(&mut conv.biases);
            trainable.push(&mut bn.gamma);
            trainable.push(&mut bn.beta);
            if let Some(c) = cff {
                trainable.push(&mut c.gate.weights);
                trainable.push(&mut c.gate.biases);
            }
            running.push(&mut bn.running_mean);
            running.push(&mut bn.running_var);
        }
        for h in &mut self.heads {
            trainable.push(&mut h.weights);
            trainable.push(&mut h.biases);
        }
        (trainable, running)
    }

    /// Trainable tensors plus batch-normalization running statistics.
    pub fn state(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.trainable();
        for (k, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{k:02}.bn.running_mean"), &b.bn.running_mean));
            out.push((format!("block{k:02}.bn.running_var"), &b.bn.running_var));
        }
        out
    }

    fn state_mut(&mut self) -> BTreeMap<String, &mut Tensor> {
        let names: Vec<String> = self.state().into_iter().map(|(n, _)| n).collect();
        let (trainable, running) = self.tensors_mut();
        names.into_iter().zip(trainable.into_iter().chain(running)).collect()
    }

    /// Trainable scalar count: weights, biases, and BN scale/shift.
    pub fn count_params(&self) -> usize {
        self.trainable().iter().map(|(_, t)| t.len()).sum()
    }

    /// Writes one FSM1 file per named tensor plus `manifest.txt` with
    /// `name,file,dims` lines.
    pub fn save_params(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        for (name, t) in self.state() {
            let file = format!("{name}.fsm");
            t.save(&dir.join(&file))?;
            let dims: Vec<String> = t.dims().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(manifest, "{name},{file},{}", dims.join("x"));
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }

    /// Loads tensors written by `save_params` into a graph of the same spec.
    pub fn load_params(&mut self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let bad = |reason: String| Error::Format {
            kind: "manifest",
            path: path.clone(),
            reason,
        };
        let mut slots = self.state_mut();
        let expected = slots.len();
        let mut seen = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            let [name, file, dims] = parts[..] else {
                return Err(bad(format!("malformed line {line:?}")));
            };
            let slot = slots
                .get_mut(name)
                .ok_or_else(|| bad(format!("unknown parameter {name}")))?;
            let t = Tensor::load(&dir.join(file))?;
            let want: Vec<String> = slot.dims().iter().map(|d| d.to_string()).collect();
            if t.dims() != slot.dims() || dims != want.join("x") {
                return Err(bad(format!("{name}: expected dims {}, found {dims}", want.join("x"))));
            }
            **slot = t;
            seen += 1;
        }
        if seen != expected {
            return Err(bad(format!("expected {expected} tensors, found {seen}")));
        }
        Ok(())
    }
}

pub fn argmax_labels(logits: &Tensor) -> Result<LabelMap> {
    let (h, w, k) = logits.hwc()?;
    let data = logits
        .data()
        .chunks_exact(k)
        .map(|px| {
            let mut best = 0;
            for c in 1..k {
                if px[c] > px[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(h, w, k, data)
}

/// Closed-form parameter overhead of the filters: `k^2 ch^2 + ch` per
/// filtered block.
pub fn filter_param_delta(graph: &LayerGraph) -> usize {
    let k = graph.spec.cff_kernel_size;
    graph
        .blocks
        .iter()
        .map(|b| {
            let ch = b.out_channels();
            k * k * ch * ch + ch
        })
        .sum()
}

pub fn count_params(graph: &LayerGraph) -> usize {
    graph.count_params()
}

pub fn predict(graph: &LayerGraph, x: &Tensor) -> Result<LabelMap> {
    graph.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{max_rel_error, numeric_grad};
    use crate::layers::softmax_ce_loss;

    fn spec(family: Family, depth: usize, base: usize, cff: bool) -> NetworkSpec {
        NetworkSpec {
            family,
            depth,
            base_channels: base,
            with_cff: cff,
            num_classes: 2,
            seed: 3,
            ..NetworkSpec::default()
        }
    }

    fn input(h: usize, w: usize, seed: u64) -> Tensor {
        let mut r = Rng::new(seed);
        Tensor::from_fn(&[h, w, 1], |_| r.normal())
    }

    #[test]
    fn shape_contract() {
        for family in [Family::Unet, Family::Fcn] {
            let g = build(&spec(family, 1, 2, true)).unwrap();
            assert_eq!(g.forward(&input(4, 4, 1), Mode::Train).unwrap().dims(), &[4, 4, 2]);
            let g = build(&NetworkSpec {
                family,
                seed: 1,
                ..NetworkSpec::default()
            })
            .unwrap();
            assert_eq!(g.forward(&input(16, 8, 1), Mode::Eval).unwrap().dims(), &[16, 8, 4]);
            assert!(matches!(
                g.forward(&input(12, 8, 1), Mode::Eval),
                Err(Error::Indivisible { .. })
            ));
        }
    }

    #[test]
    fn conv_op_counts() {
        let unet = build(&NetworkSpec::default()).unwrap();
        assert_eq!(unet.blocks.len(), 14);
        assert_eq!(unet.heads.len(), 1);
        let fcn = build(&NetworkSpec {
            family: Family::Fcn,
            ..NetworkSpec::default()
        })
        .unwrap();
        assert_eq!(fcn.blocks.len(), 8);
        assert_eq!(fcn.heads.len(), 4);
    }

    #[test]
    fn filters_do_not_perturb_backbone_init() {
        for family in [Family::Unet, Family::Fcn] {
            let alt = build(&spec(family, 2, 4, false)).unwrap();
            let neu = build(&spec(family, 2, 4, true)).unwrap();
            for (a, n) in alt.blocks.iter().zip(&neu.blocks) {
                assert_eq!(a.conv, n.conv);
                assert_eq!(a.bn, n.bn);
            }
            assert_eq!(alt.heads, neu.heads);
        }
    }

    #[test]
    fn saturated_filters_reproduce_plain_network() {
        for family in [Family::Unet, Family::Fcn] {
            let alt = build(&spec(family, 2, 4, false)).unwrap();
            let mut neu = build(&spec(family, 2, 4, true)).unwrap();
            for b in &mut neu.blocks {
                let gate = &mut b.cff.as_mut().unwrap().gate;
                gate.weights = Tensor::zeros(gate.weights.dims());
                gate.biases = Tensor::full(gate.biases.dims(), 20.0);
            }
            let x = input(8, 8, 5);
            for mode in [Mode::Train, Mode::Eval] {
                let a = alt.forward(&x, mode).unwrap();
                let n = neu.forward(&x, mode).unwrap();
                let diff = tensor::add(&a, &n.scale(-1.0)).unwrap().max_abs();
                assert!(diff < 1e-6, "{family} {mode:?}: {diff}");
            }
        }
    }

    #[test]
    fn tiny_graph_matches_hand_composition() {
        let g = build(&spec(Family::Unet, 1, 2, true)).unwrap();
        let x = input(4, 4, 9);
        let mode = Mode::Train;
        let e0 = g.blocks[0].forward(&x, mode).unwrap().0;
        let e1 = g.blocks[1].forward(&e0, mode).unwrap().0;
        let p = tensor::maxpool2(&e1).unwrap().0;
        let b0 = g.blocks[2].forward(&p, mode).unwrap().0;
        let b1 = g.blocks[3].forward(&b0, mode).unwrap().0;
        let cat = tensor::concat_channels(&tensor::upsample2(&b1).unwrap(), &e1).unwrap();
        let d0 = g.blocks[4].forward(&cat, mode).unwrap().0;
        let d1 = g.blocks[5].forward(&d0, mode).unwrap().0;
        let logits = conv2d(&d1, &g.heads[0], Padding::Same).unwrap();
        assert_eq!(g.forward(&x, mode).unwrap(), logits);
    }

    #[test]
    fn network_gradients_match_finite_differences() {
        for family in [Family::Unet, Family::Fcn] {
            let mut g = build(&spec(family, 1, 2, true)).unwrap();
            let x = input(4, 4, 21);
            let labels = LabelMap::new(4, 4, 2, (0..16).map(|k| (k % 3 == 0) as u8).collect()).unwrap();
            let trace = g.forward_trace(&x, Mode::Train).unwrap();
            let (_, gl) = softmax_ce_loss(trace.logits(), &labels).unwrap();
            let grads = g.backward(&trace, &gl).unwrap();
            let analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
            let n = analytic.len();
            assert_eq!(n, g.trainable_mut().len());
            for k in 0..n {
                let base = g.clone();
                let original = base.trainable()[k].1.clone();
                let numeric = numeric_grad(&original, |t| {
                    *g.trainable_mut()[k] = t.clone();
                    let logits = g.forward(&x, Mode::Train).unwrap();
                    softmax_ce_loss(&logits, &labels).unwrap().0
                });
                *g.trainable_mut()[k] = original;
                let err = max_rel_error(&analytic[k], &numeric);
                assert!(err < 1e-4, "{family} param {k} ({}): {err:e}", base.trainable()[k].0);
            }
        }
    }

    #[test]
    fn parameter_counts() {
        let g = build(&spec(Family::Unet, 1, 2, false)).unwrap();
        let manual: usize = g.blocks.iter().map(|b| b.param_count()).sum::<usize>()
            + g.heads.iter().map(|h| h.param_count()).sum::<usize>();
        assert_eq!(count_params(&g), manual);
        for family in [Family::Unet, Family::Fcn] {
            for k in [1, 3] {
                let alt = build(&NetworkSpec {
                    family,
                    cff_kernel_size: k,
                    ..NetworkSpec::default()
                })
                .unwrap();
                let neu = build(&NetworkSpec {
                    family,
                    cff_kernel_size: k,
                    with_cff: true,
                    ..NetworkSpec::default()
                })
                .unwrap();
                assert_eq!(count_params(&neu) - count_params(&alt), filter_param_delta(&neu));
            }
        }
    }

    #[test]
    fn predict_contract() {
        let mut g = build(&spec(Family::Fcn, 1, 2, false)).unwrap();
        let x = input(4, 4, 2);
        let p = predict(&g, &x).unwrap();
        assert!(p.data().iter().all(|&v| v < 2));
        for h in &mut g.heads {
            h.biases = Tensor::new(vec![2], vec![1e6, 0.0]).unwrap();
        }
        assert_eq!(predict(&g, &x).unwrap().count(0), 16);
    }

    #[test]
    fn probe_requires_filters() {
        let alt = build(&spec(Family::Unet, 1, 2, false)).unwrap();
        assert!(alt.probe(&input(4, 4, 1)).is_err());
        let neu = build(&spec(Family::Unet, 1, 2, true)).unwrap();
        let taps = neu.probe(&input(4, 4, 1)).unwrap();
        assert_eq!(taps.len(), 6);
        for (f, d) in &taps {
            assert_eq!(f.dims(), d.dims());
        }
    }

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = build(&spec(Family::Unet, 1, 2, true)).unwrap();
        let x = input(4, 4, 4);
        let trace = g.forward_trace(&x, Mode::Train).unwrap();
        g.update_running(&trace);
        g.save_params(dir.path()).unwrap();
        let mut h = build(&NetworkSpec {
            seed: 99,
            ..spec(Family::Unet, 1, 2, true)
        })
        .unwrap();
        assert_ne!(g.forward(&x, Mode::Eval).unwrap(), h.forward(&x, Mode::Eval).unwrap());
        h.load_params(dir.path()).unwrap();
        assert_eq!(g.forward(&x, Mode::Eval).unwrap(), h.forward(&x, Mode::Eval).unwrap());
        let mut wrong = build(&spec(Family::Unet, 1, 2, false)).unwrap();
        assert!(wrong.load_params(dir.path()).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        let s = NetworkSpec {
            family: Family::Fcn,
            with_cff: true,
            cff_kernel_size: 3,
            block_order: BlockOrder::BnRelu,
            seed: 17,
            ..NetworkSpec::default()
        };
        assert_eq!(NetworkSpec::parse(&s.to_text()).unwrap(), s);
        assert!(NetworkSpec::parse("net.bogus = 1").is_err());
    }
}
