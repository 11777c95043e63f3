//! Bit-exact readers and writers for the on-disk formats: TCK and TRK
//! tractograms, label lists, graph and connectivity-matrix triplets,
//! key/value report documents, and index snapshots.
//!
//! All binary formats are little-endian; readers reject other declarations
//! explicitly and bounds-check every length field against the file size
//! before allocating. Text formats are UTF-8 with LF line endings, `#`
//! comments permitted; numeric output uses shortest round-trip float
//! formatting.

mod snapshot;
mod tck;
mod text;
mod trk;

pub use snapshot::{read_index_snapshot, write_index_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use tck::{read_tck, read_tck_bytes, write_tck, write_tck_bytes};
pub use text::{
    bench_report_to_string, clusters_to_string, graph_to_string, kv_to_string, labels_to_string,
    matrix_to_string, read_connectivity_matrix, read_graph, read_hemispheres, read_kv_doc,
    read_label_names, read_labels, read_reliability_report, reliability_report_to_string,
    segmentation_to_string, write_bench_report, write_clusters, write_connectivity_matrix,
    write_graph, write_kv_doc, write_label_names, write_labels, write_reliability_report,
    write_segmentation, KvDoc, ReliabilityReportFile,
};
pub use trk::{
    read_trk, read_trk_bytes, trk_to_world, world_to_trk, write_trk, write_trk_bytes, TrkFile,
    TrkHeader, VoxelConvention,
};
