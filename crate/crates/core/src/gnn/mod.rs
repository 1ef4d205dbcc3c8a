//! Graph classifiers over the gene graph: GCN, multi-head GAT with
//! averaged heads, and an edge/node message-passing network.

mod config;
mod layers;
mod model;

pub use config::{GatConfig, GcnConfig, GnnArch, GnnConfig, MetaConfig, LAYER_SIZES, MAX_HEADS, MAX_STEPS, MIN_STEPS};
pub use layers::{
    gat_layer, gcn_layer, global_mean_pool, metalayer_step, record_gat, record_gcn, record_meta,
    EdgeIndex, GatHead, GatHeadVars, GatOutput, Mlp, MlpVars, GAT_SLOPE,
};
pub use model::{build_gnn, gnn_forward, GnnModel};
