//! Auxiliary board properties used as observer labels, plus the object
//! model's from-square target. "White" is always the normalized side to move.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chess::board::{Board, Color, PieceKind};
use crate::chess::movegen::{in_check, MoveRecord};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PropertyKind {
    MaterialAdvantage,
    WhiteInCheck,
    InsufficientMaterial,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 3] = [
        PropertyKind::MaterialAdvantage,
        PropertyKind::WhiteInCheck,
        PropertyKind::InsufficientMaterial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PropertyKind::MaterialAdvantage => "material_advantage",
            PropertyKind::WhiteInCheck => "white_in_check",
            PropertyKind::InsufficientMaterial => "insufficient_material",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropertyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PropertyKind::ALL
            .into_iter()
            .find(|p| p.name() == s || format!("{p:?}") == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown property `{s}`")))
    }
}

/// Tunables for the label oracles. The defaults are the canonical choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelConfig {
    /// Whether equal material counts as a material advantage for white.
    pub material_tie_positive: bool,
    /// Whether king + two knights counts as insufficient material.
    pub two_knights_insufficient: bool,
}

pub fn piece_value(kind: PieceKind) -> u32 {
    match kind {
        PieceKind::Pawn => 1,
        PieceKind::Knight | PieceKind::Bishop => 3,
        PieceKind::Rook => 5,
        PieceKind::Queen => 9,
        PieceKind::King => 0,
    }
}

pub fn material(board: &Board, color: Color) -> u32 {
    board
        .pieces()
        .filter(|(_, p)| p.color == color)
        .map(|(_, p)| piece_value(p.kind))
        .sum()
}

pub fn material_advantage_label(board: &Board, cfg: &LabelConfig) -> bool {
    let (white, black) = (material(board, Color::White), material(board, Color::Black));
    if cfg.material_tie_positive {
        white >= black
    } else {
        white > black
    }
}

pub fn in_check_label(board: &Board) -> bool {
    in_check(board, Color::White)
}

/// True iff white's non-king material cannot force mate on its own: nothing,
/// a single bishop, or a single knight.
pub fn insufficient_material_label(board: &Board, cfg: &LabelConfig) -> bool {
    let mut minors = 0;
    let mut knights = 0;
    for (_, p) in board.pieces().filter(|(_, p)| p.color == Color::White) {
        match p.kind {
            PieceKind::King => {}
            PieceKind::Bishop => minors += 1,
            PieceKind::Knight => {
                minors += 1;
                knights += 1;
            }
            _ => return false,
        }
    }
    minors <= 1 || (cfg.two_knights_insufficient && minors == 2 && knights == 2)
}

pub fn property_label(board: &Board, property: PropertyKind, cfg: &LabelConfig) -> bool {
    match property {
        PropertyKind::MaterialAdvantage => material_advantage_label(board, cfg),
        PropertyKind::WhiteInCheck => in_check_label(board),
        PropertyKind::InsufficientMaterial => insufficient_material_label(board, cfg),
    }
}

/// All three labels in `PropertyKind::ALL` order.
pub fn all_labels(board: &Board, cfg: &LabelConfig) -> [bool; 3] {
    PropertyKind::ALL.map(|p| property_label(board, p, cfg))
}

/// Row-major from-square index (`rank * 8 + file`).
pub fn from_square_label(mv: &MoveRecord) -> usize {
    mv.from.index()
}
