//! Mailbox board representation.
//!
//! Squares are indexed `rank * 8 + file`, so a1 = 0, h1 = 7, a8 = 56. Rank 1
//! is row 0 and file a is column 0 everywhere in the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    White,
    Black,
}

impl Color {
    pub fn opposite(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Color::White => 0,
            Color::Black => 1,
        }
    }
}

/// Piece kinds in the fixed encoding-plane order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PieceKind {
    Pawn,
    Knight,
    Bishop,
    Rook,
    Queen,
    King,
}

impl PieceKind {
    pub const ALL: [PieceKind; 6] = [
        PieceKind::Pawn,
        PieceKind::Knight,
        PieceKind::Bishop,
        PieceKind::Rook,
        PieceKind::Queen,
        PieceKind::King,
    ];

    /// Plane index in the board tensor.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Uppercase SAN/FEN letter; pawns use `P`.
    pub fn letter(self) -> char {
        match self {
            PieceKind::Pawn => 'P',
            PieceKind::Knight => 'N',
            PieceKind::Bishop => 'B',
            PieceKind::Rook => 'R',
            PieceKind::Queen => 'Q',
            PieceKind::King => 'K',
        }
    }

    pub fn from_letter(c: char) -> Option<PieceKind> {
        match c.to_ascii_uppercase() {
            'P' => Some(PieceKind::Pawn),
            'N' => Some(PieceKind::Knight),
            'B' => Some(PieceKind::Bishop),
            'R' => Some(PieceKind::Rook),
            'Q' => Some(PieceKind::Queen),
            'K' => Some(PieceKind::King),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Piece {
    pub kind: PieceKind,
    pub color: Color,
}

impl Piece {
    pub const fn new(kind: PieceKind, color: Color) -> Self {
        Piece { kind, color }
    }

    pub fn fen_char(self) -> char {
        let c = self.kind.letter();
        match self.color {
            Color::White => c,
            Color::Black => c.to_ascii_lowercase(),
        }
    }

    pub fn from_fen_char(c: char) -> Option<Piece> {
        let kind = PieceKind::from_letter(c)?;
        let color = if c.is_ascii_uppercase() {
            Color::White
        } else {
            Color::Black
        };
        Some(Piece { kind, color })
    }
}

/// A square index in `0..64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Square(u8);

impl Square {
    pub fn new(index: u8) -> Option<Square> {
        (index < 64).then_some(Square(index))
    }

    pub fn from_coords(rank: u8, file: u8) -> Option<Square> {
        (rank < 8 && file < 8).then_some(Square(rank * 8 + file))
    }

    /// Offset by (rank, file) deltas; `None` when leaving the board.
    pub fn offset(self, dr: i8, df: i8) -> Option<Square> {
        let r = self.rank() as i8 + dr;
        let f = self.file() as i8 + df;
        if (0..8).contains(&r) && (0..8).contains(&f) {
            Some(Square((r * 8 + f) as u8))
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn rank(self) -> u8 {
        self.0 / 8
    }

    pub fn file(self) -> u8 {
        self.0 % 8
    }

    /// Vertical reflection: rank r becomes rank 7 - r.
    pub fn flip_vertical(self) -> Square {
        Square((7 - self.rank()) * 8 + self.file())
    }

    pub fn parse(s: &str) -> Option<Square> {
        let b = s.as_bytes();
        if b.len() != 2 {
            return None;
        }
        let file = b[0].checked_sub(b'a')?;
        let rank = b[1].checked_sub(b'1')?;
        Square::from_coords(rank, file)
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", (b'a' + self.file()) as char, self.rank() + 1)
    }
}

/// Castling availability, indexed white-kingside, white-queenside,
/// black-kingside, black-queenside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CastlingRights(pub [bool; 4]);

impl CastlingRights {
    pub const ALL: CastlingRights = CastlingRights([true; 4]);
    pub const NONE: CastlingRights = CastlingRights([false; 4]);

    pub fn kingside(&self, color: Color) -> bool {
        self.0[color.index() * 2]
    }

    pub fn queenside(&self, color: Color) -> bool {
        self.0[color.index() * 2 + 1]
    }

    pub fn clear(&mut self, color: Color) {
        self.0[color.index() * 2] = false;
        self.0[color.index() * 2 + 1] = false;
    }

    pub fn swapped(self) -> CastlingRights {
        let [wk, wq, bk, bq] = self.0;
        CastlingRights([bk, bq, wk, wq])
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Board {
    squares: [Option<Piece>; 64],
    pub side_to_move: Color,
    pub castling: CastlingRights,
    pub en_passant: Option<Square>,
}

impl Board {
    /// An empty board with white to move. Not valid until kings are placed.
    pub fn empty() -> Board {
        Board {
            squares: [None; 64],
            side_to_move: Color::White,
            castling: CastlingRights::NONE,
            en_passant: None,
        }
    }

    pub fn initial() -> Board {
        let mut board = Board::empty();
        let back = [
            PieceKind::Rook,
            PieceKind::Knight,
            PieceKind::Bishop,
            PieceKind::Queen,
            PieceKind::King,
            PieceKind::Bishop,
            PieceKind::Knight,
            PieceKind::Rook,
        ];
        for (file, kind) in back.into_iter().enumerate() {
            let file = file as u8;
            board.set(sq(0, file), Some(Piece::new(kind, Color::White)));
            board.set(sq(1, file), Some(Piece::new(PieceKind::Pawn, Color::White)));
            board.set(sq(6, file), Some(Piece::new(PieceKind::Pawn, Color::Black)));
            board.set(sq(7, file), Some(Piece::new(kind, Color::Black)));
        }
        board.castling = CastlingRights::ALL;
        board
    }

    /// Builds a board from `(square name, piece)` pairs, e.g. `("e1", 'K')`.
    pub fn from_pieces(pieces: &[(&str, char)], side_to_move: Color) -> Result<Board> {
        let mut board = Board::empty();
        board.side_to_move = side_to_move;
        for &(name, c) in pieces {
            let square = Square::parse(name).ok_or_else(|| Error::InvalidBoard(format!("bad square {name}")))?;
            let piece = Piece::from_fen_char(c).ok_or_else(|| Error::InvalidBoard(format!("bad piece {c}")))?;
            board.set(square, Some(piece));
        }
        board.validate()?;
        Ok(board)
    }

    #[inline]
    pub fn get(&self, square: Square) -> Option<Piece> {
        self.squares[square.index()]
    }

    #[inline]
    pub fn set(&mut self, square: Square, piece: Option<Piece>) {
        self.squares[square.index()] = piece;
    }

    pub fn pieces(&self) -> impl Iterator<Item = (Square, Piece)> + '_ {
        self.squares
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (Square(i as u8), p)))
    }

    pub fn piece_count(&self) -> usize {
        self.squares.iter().filter(|p| p.is_some()).count()
    }

    pub fn king_square(&self, color: Color) -> Option<Square> {
        self.pieces()
            .find(|(_, p)| p.kind == PieceKind::King && p.color == color)
            .map(|(s, _)| s)
    }

    /// Checks the structural invariants: one king per side, no pawns on the
    /// back ranks, en passant square on rank 3 or 6.
    pub fn validate(&self) -> Result<()> {
        for color in [Color::White, Color::Black] {
            let kings = self
                .pieces()
                .filter(|(_, p)| p.kind == PieceKind::King && p.color == color)
                .count();
            if kings != 1 {
                return Err(Error::InvalidBoard(format!("{color:?} has {kings} kings")));
            }
        }
        if let Some((s, _)) = self
            .pieces()
            .find(|(s, p)| p.kind == PieceKind::Pawn && (s.rank() == 0 || s.rank() == 7))
        {
            return Err(Error::InvalidBoard(format!("pawn on back rank at {s}")));
        }
        if let Some(ep) = self.en_passant {
            if ep.rank() != 2 && ep.rank() != 5 {
                return Err(Error::InvalidBoard(format!(
                    "en passant square {ep} not on rank 3 or 6"
                )));
            }
        }
        Ok(())
    }

    /// Piece placement only, ignoring side to move and auxiliary state.
    pub fn placement(&self) -> &[Option<Piece>; 64] {
        &self.squares
    }
}

impl fmt::Debug for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Board({})", crate::chess::fen::to_fen(self))
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rank in (0..8).rev() {
            for file in 0..8 {
                let c = self.get(sq(rank, file)).map_or('.', Piece::fen_char);
                write!(f, "{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Shorthand for an on-board square; panics on out-of-range coordinates.
pub(crate) fn sq(rank: u8, file: u8) -> Square {
    Square::from_coords(rank, file).expect("coordinates on board")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_indexing_convention() {
        assert_eq!(Square::parse("a1").unwrap().index(), 0);
        assert_eq!(Square::parse("e2").unwrap().index(), 12);
        assert_eq!(Square::parse("h8").unwrap().index(), 63);
        assert_eq!(Square::parse("e4").unwrap().to_string(), "e4");
        assert_eq!(
            Square::parse("a8").unwrap().flip_vertical(),
            Square::parse("a1").unwrap()
        );
        assert!(Square::parse("i1").is_none());
        assert!(Square::parse("a9").is_none());
    }

    #[test]
    fn initial_position_is_valid() {
        let b = Board::initial();
        b.validate().unwrap();
        assert_eq!(b.piece_count(), 32);
        assert_eq!(b.king_square(Color::White), Square::parse("e1"));
        assert_eq!(b.king_square(Color::Black), Square::parse("e8"));
    }

    #[test]
    fn validation_rejects_broken_boards() {
        assert!(Board::from_pieces(&[("e1", 'K')], Color::White).is_err());
        assert!(Board::from_pieces(&[("e1", 'K'), ("e8", 'k'), ("a1", 'P')], Color::White).is_err());
        let mut b = Board::from_pieces(&[("e1", 'K'), ("e8", 'k')], Color::White).unwrap();
        b.en_passant = Square::parse("e4");
        assert!(b.validate().is_err());
        b.en_passant = Square::parse("e6");
        assert!(b.validate().is_ok());
    }
}
