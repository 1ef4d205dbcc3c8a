//! Pathway hierarchies and the binary mask stacks compiled from them.

mod hierarchy;
mod masks;

pub use hierarchy::{
    assign_levels, check_acyclic, format_gene_sets, format_relations, parse_gene_sets, parse_relations, read_gene_sets,
    read_relations, GeneSet, PathwayHierarchy,
};
pub use masks::{
    build_masks, mask_stats, permute_mask, LayerStats, MaskSet, MaskStats, MAX_LAYERS, MIN_LAYERS,
};
