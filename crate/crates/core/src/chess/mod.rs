//! Chess rules, game records and the board encodings fed to the object model.

pub mod board;
pub mod cache;
pub mod encode;
pub mod fen;
pub mod labels;
pub mod movegen;
pub mod pgn;
pub mod positions;
pub mod san;
pub mod synth;

pub use board::{Board, CastlingRights, Color, Piece, PieceKind, Square};
pub use cache::PositionCache;
pub use encode::{encode_board, normalize_move, normalize_to_white, reflect_and_swap, BoardTensor};
pub use fen::{parse_fen, to_fen};
pub use labels::{
    from_square_label, in_check_label, insufficient_material_label, material_advantage_label, property_label,
    LabelConfig, PropertyKind,
};
pub use movegen::{apply_legal, legal_moves, MoveRecord};
pub use pgn::{parse_pgn, Game, PgnParse};
pub use positions::{derive_positions, PositionRecord};
