//! Heat maps of linear observers and neuron firing-proportion statistics.

pub mod heatmap;
pub mod proportions;

pub use heatmap::{cell_color, heatmap_from_linear, heatmap_svg, render_heatmap, HeatMap};
pub use proportions::{
    annihilate, annihilation_control, annihilation_study, cdf_svg, ecdf, firing_counts, layer_cdfs, median,
    neuron_label_proportions, proportions_from_snapshot, write_cdf_csv, write_proportion_csv, AnnihilationSummary,
    CdfCurve, ProportionReport,
};
