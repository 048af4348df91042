//! Side-to-move normalization and the 8x8x6 board tensor.

use serde::{Deserialize, Serialize};

use crate::chess::board::{Board, Color, Piece, PieceKind, Square};
use crate::chess::movegen::MoveRecord;
use crate::error::{Error, Result};

pub const PLANES: usize = 6;
pub const BOARD_TENSOR_LEN: usize = 8 * 8 * PLANES;

/// Reflects the board vertically and swaps colors when black is to move, so
/// the side to move is always white. White-to-move boards are returned as is.
pub fn normalize_to_white(board: &Board) -> Board {
    if board.side_to_move == Color::White {
        return board.clone();
    }
    reflect_and_swap(board)
}

/// Unconditional reflection + color swap. Applying it twice is the identity.
pub fn reflect_and_swap(board: &Board) -> Board {
    let mut out = Board::empty();
    for (square, piece) in board.pieces() {
        out.set(
            square.flip_vertical(),
            Some(Piece::new(piece.kind, piece.color.opposite())),
        );
    }
    out.side_to_move = board.side_to_move.opposite();
    out.castling = board.castling.swapped();
    out.en_passant = board.en_passant.map(Square::flip_vertical);
    out
}

/// Maps a move played from `board` into the frame of `normalize_to_white(board)`.
pub fn normalize_move(board: &Board, mv: MoveRecord) -> MoveRecord {
    match board.side_to_move {
        Color::White => mv,
        Color::Black => mv.flip_vertical(),
    }
}

/// Piece placement as an 8x8x6 tensor with entries in {-1, 0, 1}.
///
/// Stored plane-major: index = plane * 64 + rank * 8 + file. This is also
/// the order in which the tensor is flattened for the object model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoardTensor {
    values: Vec<i8>,
}

impl BoardTensor {
    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if values.len() != BOARD_TENSOR_LEN {
            return Err(Error::ShapeMismatch {
                expected: vec![BOARD_TENSOR_LEN],
                actual: vec![values.len()],
            });
        }
        if values.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(Error::Format("board tensor entries must be -1, 0 or 1".into()));
        }
        Ok(BoardTensor { values })
    }

    pub fn get(&self, plane: usize, rank: usize, file: usize) -> i8 {
        self.values[plane * 64 + rank * 8 + file]
    }

    pub fn plane(&self, kind: PieceKind) -> &[i8] {
        let p = kind.index();
        &self.values[p * 64..(p + 1) * 64]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn write_f64(&self, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(&self.values) {
            *o = f64::from(v);
        }
    }
}

pub fn encode_board(board: &Board) -> Result<BoardTensor> {
    if board.side_to_move != Color::White {
        return Err(Error::NotNormalized);
    }
    let mut values = vec![0i8; BOARD_TENSOR_LEN];
    for (square, piece) in board.pieces() {
        let sign = match piece.color {
            Color::White => 1,
            Color::Black => -1,
        };
        values[piece.kind.index() * 64 + square.index()] = sign;
    }
    Ok(BoardTensor { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_is_fixed_point() {
        let b = Board::initial();
        assert_eq!(normalize_to_white(&b), b);
        let mut black = Board::initial();
        black.side_to_move = Color::Black;
        assert_eq!(normalize_to_white(&black), b);
    }

    #[test]
    fn rook_reflection_example() {
        let b = Board::from_pieces(&[("e1", 'K'), ("e8", 'k'), ("a8", 'r')], Color::Black).unwrap();
        let want = Board::from_pieces(&[("e1", 'K'), ("e8", 'k'), ("a1", 'R')], Color::White).unwrap();
        assert_eq!(normalize_to_white(&b), want);
    }

    #[test]
    fn castling_and_en_passant_follow_reflection() {
        let mut b = Board::from_pieces(
            &[("e1", 'K'), ("e8", 'k'), ("h8", 'r'), ("d4", 'P'), ("e4", 'p')],
            Color::Black,
        )
        .unwrap();
        b.castling.0 = [false, false, true, false];
        b.en_passant = Square::parse("d3");
        let n = normalize_to_white(&b);
        assert_eq!(n.castling.0, [true, false, false, false]);
        assert_eq!(n.en_passant, Square::parse("d6"));
        n.validate().unwrap();
    }

    #[test]
    fn initial_encoding() {
        let t = encode_board(&Board::initial()).unwrap();
        let pawns = t.plane(PieceKind::Pawn);
        for file in 0..8 {
            assert_eq!(pawns[8 + file], 1);
            assert_eq!(pawns[48 + file], -1);
        }
        assert_eq!(pawns.iter().filter(|&&v| v != 0).count(), 16);
        let abs_sum: i32 = t.values().iter().map(|v| i32::from(v.abs())).sum();
        assert_eq!(abs_sum, 32);
        assert_eq!(t.get(PieceKind::King.index(), 0, 4), 1);
        assert_eq!(t.get(PieceKind::King.index(), 7, 4), -1);
    }

    #[test]
    fn kings_only_encoding() {
        let b = Board::from_pieces(&[("e1", 'K'), ("e8", 'k')], Color::White).unwrap();
        let t = encode_board(&b).unwrap();
        let nonzero: Vec<usize> = (0..BOARD_TENSOR_LEN).filter(|&i| t.values()[i] != 0).collect();
        assert_eq!(nonzero.len(), 2);
        assert!(nonzero.iter().all(|&i| i / 64 == 5));
    }

    #[test]
    fn unnormalized_board_is_rejected() {
        let mut b = Board::initial();
        b.side_to_move = Color::Black;
        assert!(matches!(encode_board(&b), Err(Error::NotNormalized)));
    }
}
