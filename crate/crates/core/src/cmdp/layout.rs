use crate::error::{structural, Result};

/// Loop-free layered state space `S_0 ∪ … ∪ S_L` with a shared action set.
///
/// States are numbered contiguously layer by layer, so layer `k` owns the ids
/// `state_offset(k) .. state_offset(k) + layer_size(k)`. Three index spaces are
/// derived from the layer sizes:
///
/// * states, one per element of each layer;
/// * pairs `(s, a)` for every non-terminal state;
/// * edges `(s, a, s')` with `s ∈ S_k`, `s' ∈ S_{k+1}`, laid out block by block
///   so that layer `k` is the contiguous slice `edge_range(k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpLayout {
    sizes: Vec<usize>,
    actions: usize,
    state_offsets: Vec<usize>,
    pair_offsets: Vec<usize>,
    edge_offsets: Vec<usize>,
    layer_of: Vec<usize>,
}

/// One `(s, a, s')` transition slot, addressed both globally and per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub layer: usize,
    pub state: usize,
    pub action: usize,
    pub next: usize,
    pub pair: usize,
    pub index: usize,
}

impl MdpLayout {
    /// Builds a layout from per-layer state counts `|S_0|, …, |S_L|`.
    pub fn new(layer_sizes: &[usize], actions: usize) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(structural("a layout needs at least an initial and a terminal layer"));
        }
        if layer_sizes[0] != 1 || layer_sizes[layer_sizes.len() - 1] != 1 {
            return Err(structural("initial and terminal layers must be singletons"));
        }
        if let Some(k) = layer_sizes.iter().position(|&n| n == 0) {
            return Err(structural(format!("layer {k} is empty")));
        }
        if actions == 0 {
            return Err(structural("action count must be positive"));
        }
        let depth = layer_sizes.len() - 1;
        let mut state_offsets = Vec::with_capacity(depth + 2);
        let mut pair_offsets = Vec::with_capacity(depth + 1);
        let mut edge_offsets = Vec::with_capacity(depth + 1);
        let (mut s, mut p, mut e) = (0, 0, 0);
        for k in 0..=depth {
            state_offsets.push(s);
            s += layer_sizes[k];
            if k < depth {
                pair_offsets.push(p);
                edge_offsets.push(e);
                p += layer_sizes[k] * actions;
                e += layer_sizes[k] * actions * layer_sizes[k + 1];
            }
        }
        state_offsets.push(s);
        pair_offsets.push(p);
        edge_offsets.push(e);
        let layer_of = (0..=depth)
            .flat_map(|k| std::iter::repeat_n(k, layer_sizes[k]))
            .collect();
        Ok(Self {
            sizes: layer_sizes.to_vec(),
            actions,
            state_offsets,
            pair_offsets,
            edge_offsets,
            layer_of,
        })
    }

    /// Episode length `L` (number of transitions per episode).
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layer_size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn state_count(&self) -> usize {
        self.state_offsets[self.sizes.len()]
    }

    pub fn pair_count(&self) -> usize {
        self.pair_offsets[self.depth()]
    }

    pub fn edge_count(&self) -> usize {
        self.edge_offsets[self.depth()]
    }

    pub fn initial_state(&self) -> usize {
        0
    }

    pub fn terminal_state(&self) -> usize {
        self.state_count() - 1
    }

    pub fn state_offset(&self, k: usize) -> usize {
        self.state_offsets[k]
    }

    pub fn layer_states(&self, k: usize) -> std::ops::Range<usize> {
        self.state_offsets[k]..self.state_offsets[k + 1]
    }

    pub fn layer_of(&self, state: usize) -> usize {
        self.layer_of[state]
    }

    pub fn pair_range(&self, k: usize) -> std::ops::Range<usize> {
        self.pair_offsets[k]..self.pair_offsets[k + 1]
    }

    pub fn edge_range(&self, k: usize) -> std::ops::Range<usize> {
        self.edge_offsets[k]..self.edge_offsets[k + 1]
    }

    /// Pair id of `(state, action)`; `state` must be non-terminal.
    pub fn pair_index(&self, state: usize, action: usize) -> usize {
        let k = self.layer_of[state];
        self.pair_offsets[k] + (state - self.state_offsets[k]) * self.actions + action
    }

    /// Inverse of [`pair_index`](Self::pair_index).
    pub fn pair_parts(&self, pair: usize) -> (usize, usize) {
        let k = self.pair_offsets.partition_point(|&o| o <= pair) - 1;
        let local = pair - self.pair_offsets[k];
        (self.state_offsets[k] + local / self.actions, local % self.actions)
    }

    /// Layer whose states own `pair`.
    pub fn pair_layer(&self, pair: usize) -> usize {
        self.pair_offsets.partition_point(|&o| o <= pair) - 1
    }

    /// Number of successor states of a pair, `|S_{k(s)+1}|`.
    pub fn successors_of_pair(&self, pair: usize) -> usize {
        self.sizes[self.pair_layer(pair) + 1]
    }

    /// First edge index of the row `(s, a, ·)`.
    pub fn pair_edge_start(&self, pair: usize) -> usize {
        let k = self.pair_layer(pair);
        self.edge_offsets[k] + (pair - self.pair_offsets[k]) * self.sizes[k + 1]
    }

    /// Edge index of `(state, action, next)`, checking the layering.
    pub fn edge_index(&self, state: usize, action: usize, next: usize) -> Result<usize> {
        if state >= self.state_count() || next >= self.state_count() {
            return Err(structural(format!("state id out of range in ({state}, {action}, {next})")));
        }
        if action >= self.actions {
            return Err(structural(format!("action {action} out of range")));
        }
        let k = self.layer_of[state];
        if k == self.depth() || self.layer_of[next] != k + 1 {
            return Err(structural(format!(
                "({state}, {action}, {next}) does not connect consecutive layers"
            )));
        }
        let pair = self.pair_index(state, action);
        Ok(self.pair_edge_start(pair) + (next - self.state_offsets[k + 1]))
    }

    /// Number of edges in layer `k`, `|S_k||A||S_{k+1}|`.
    pub fn block_len(&self, k: usize) -> usize {
        self.sizes[k] * self.actions * self.sizes[k + 1]
    }

    /// All edges in canonical (storage) order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.depth()).flat_map(move |k| {
            let next_base = self.state_offsets[k + 1];
            let width = self.sizes[k + 1];
            self.pair_range(k).flat_map(move |pair| {
                let (state, action) = self.pair_parts(pair);
                let start = self.pair_edge_start(pair);
                (0..width).map(move |j| Edge {
                    layer: k,
                    state,
                    action,
                    next: next_base + j,
                    pair,
                    index: start + j,
                })
            })
        })
    }

    /// Number of deterministic stationary policies, saturating.
    pub fn deterministic_policy_count(&self) -> usize {
        let nonterminal = self.state_count() - 1;
        (0..nonterminal).fold(1usize, |acc, _| acc.saturating_mul(self.actions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_layers() {
        assert!(MdpLayout::new(&[1], 2).is_err());
        assert!(MdpLayout::new(&[2, 1], 2).is_err());
        assert!(MdpLayout::new(&[1, 0, 1], 2).is_err());
        assert!(MdpLayout::new(&[1, 2, 1], 0).is_err());
    }

    #[test]
    fn index_spaces() {
        let l = MdpLayout::new(&[1, 2, 2, 1], 2).unwrap();
        assert_eq!(l.depth(), 3);
        assert_eq!(l.state_count(), 6);
        assert_eq!(l.pair_count(), 10);
        assert_eq!(l.block_len(0), 4);
        assert_eq!(l.block_len(1), 8);
        assert_eq!(l.block_len(2), 4);
        assert_eq!(l.edge_count(), 16);
        for (n, e) in l.edges().enumerate() {
            assert_eq!(e.index, n);
            assert_eq!(l.edge_index(e.state, e.action, e.next).unwrap(), n);
            assert_eq!(l.pair_parts(e.pair), (e.state, e.action));
        }
        assert!(l.edge_index(0, 0, 3).is_err());
        assert!(l.edge_index(5, 0, 0).is_err());
    }
}
