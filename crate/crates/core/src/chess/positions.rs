//! Replay of games into labeled, encoded positions.

use serde::{Deserialize, Serialize};

use crate::chess::board::Board;
use crate::chess::encode::{encode_board, normalize_move, normalize_to_white, BoardTensor};
use crate::chess::fen::parse_fen;
use crate::chess::labels::{all_labels, from_square_label, LabelConfig, PropertyKind};
use crate::chess::movegen::{apply_legal, MoveRecord};
use crate::chess::pgn::Game;
use crate::error::Result;

#[derive(Debug, Clone, Default)]
pub struct DerivedPositions {
    /// Board before move i, paired with move i.
    pub positions: Vec<(Board, MoveRecord)>,
    /// Index of the first illegal move, when replay had to stop early.
    pub truncated_at: Option<usize>,
}

pub fn derive_positions(game: &Game) -> DerivedPositions {
    let mut out = DerivedPositions::default();
    let mut board = game.initial.clone();
    for (i, &mv) in game.moves.iter().enumerate() {
        match apply_legal(&board, mv) {
            Some(next) => {
                out.positions.push((board, mv));
                board = next;
            }
            None => {
                log::warn!("illegal move {} at ply {i}; truncating game", mv.to_uci());
                out.truncated_at = Some(i);
                break;
            }
        }
    }
    out
}

/// One normalized, encoded and fully labeled position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub tensor: BoardTensor,
    /// From-square of the next move in the normalized frame; `None` for
    /// positions ingested without a move (FEN lists).
    pub from_square: Option<u8>,
    /// Labels in `PropertyKind::ALL` order.
    pub labels: [bool; 3],
    pub game_id: u32,
    pub ply: u32,
}

impl PositionRecord {
    pub fn label(&self, property: PropertyKind) -> bool {
        self.labels[property.index()]
    }
}

/// Normalizes, encodes and labels one position.
pub fn make_record(
    board: &Board,
    mv: Option<MoveRecord>,
    labels: &LabelConfig,
    game_id: u32,
    ply: u32,
) -> Result<PositionRecord> {
    let normalized = normalize_to_white(board);
    let tensor = encode_board(&normalized)?;
    let from_square = mv.map(|m| from_square_label(&normalize_move(board, m)) as u8);
    Ok(PositionRecord {
        tensor,
        from_square,
        labels: all_labels(&normalized, labels),
        game_id,
        ply,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RecordStats {
    pub games: usize,
    pub positions: usize,
    pub truncated_games: usize,
}

/// Expands games into records. `max_positions` caps the total.
pub fn records_from_games(
    games: &[Game],
    labels: &LabelConfig,
    max_positions: Option<usize>,
) -> Result<(Vec<PositionRecord>, RecordStats)> {
    let mut records = Vec::new();
    let mut stats = RecordStats::default();
    let cap = max_positions.unwrap_or(usize::MAX);
    'games: for (gid, game) in games.iter().enumerate() {
        let derived = derive_positions(game);
        if derived.truncated_at.is_some() {
            stats.truncated_games += 1;
        }
        stats.games += 1;
        for (ply, (board, mv)) in derived.positions.iter().enumerate() {
            if records.len() >= cap {
                break 'games;
            }
            records.push(make_record(board, Some(*mv), labels, gid as u32, ply as u32)?);
        }
    }
    stats.positions = records.len();
    Ok((records, stats))
}

/// Reads one FEN per line; blank lines and `#` comments are ignored. Each
/// position becomes its own pseudo-game without a from-square.
pub fn records_from_fen_list(
    text: &str,
    labels: &LabelConfig,
    first_game_id: u32,
) -> (Vec<PositionRecord>, Vec<String>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    for (i, line) in lines.enumerate() {
        match parse_fen(line).and_then(|b| make_record(&b, None, labels, first_game_id + i as u32, 0)) {
            Ok(r) => records.push(r),
            Err(e) => errors.push(format!("line {}: {e}", i + 1)),
        }
    }
    (records, errors)
}
