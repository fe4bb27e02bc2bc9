//! Implicit corrections through paired Real NVP flows.

mod coupling;
mod fairnf;

pub use coupling::{
    alternating_layouts, flow_nll, nll_node, CouplingLayer, FlowStack, LatentBatch, LayerLayout,
    SCALE_LIMIT,
};
pub use fairnf::{
    build_fairnf, project_first, rank_head_forward, train_fairnf, ChainNodes, FairNfArch,
    FairNfConfig, FairNfDescriptor, FairNfModel, FlowBatch, FlowEpochStats, FlowTrace, FlowVariant,
    StepLosses,
};

#[cfg(test)]
mod tests;
