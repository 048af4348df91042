//! Attack detection, legal move generation and move application.
//!
//! Mailbox based; the corpus sizes involved are small enough that bitboards
//! buy nothing here.

use serde::{Deserialize, Serialize};

use crate::chess::board::{Board, Color, Piece, PieceKind, Square};

pub(crate) const KNIGHT_DELTAS: [(i8, i8); 8] =
    [(-2, -1), (-2, 1), (-1, -2), (-1, 2), (1, -2), (1, 2), (2, -1), (2, 1)];
pub(crate) const KING_DELTAS: [(i8, i8); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
pub(crate) const ROOK_DIRS: [(i8, i8); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub(crate) const BISHOP_DIRS: [(i8, i8); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

/// A move as stored in the object dataset: origin, destination and an
/// optional promotion piece. Castling is the king's two-square move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveRecord {
    pub from: Square,
    pub to: Square,
    pub promotion: Option<PieceKind>,
}

impl MoveRecord {
    pub fn new(from: Square, to: Square) -> Self {
        MoveRecord {
            from,
            to,
            promotion: None,
        }
    }

    /// Long algebraic form, e.g. `e2e4` or `e7e8q`.
    pub fn to_uci(&self) -> String {
        let mut s = format!("{}{}", self.from, self.to);
        if let Some(p) = self.promotion {
            s.push(p.letter().to_ascii_lowercase());
        }
        s
    }

    pub fn flip_vertical(self) -> MoveRecord {
        MoveRecord {
            from: self.from.flip_vertical(),
            to: self.to.flip_vertical(),
            promotion: self.promotion,
        }
    }
}

fn pawn_dir(color: Color) -> i8 {
    match color {
        Color::White => 1,
        Color::Black => -1,
    }
}

/// Whether any piece of color `by` attacks `target`. Works outward from the
/// target square along each attack pattern.
pub fn is_attacked(board: &Board, target: Square, by: Color) -> bool {
    let is = |s: Option<Square>, kind: PieceKind| s.and_then(|s| board.get(s)) == Some(Piece::new(kind, by));
    // A pawn of color `by` attacks diagonally forward, so look one rank back.
    let back = -pawn_dir(by);
    if is(target.offset(back, -1), PieceKind::Pawn) || is(target.offset(back, 1), PieceKind::Pawn) {
        return true;
    }
    if KNIGHT_DELTAS
        .iter()
        .any(|&(dr, df)| is(target.offset(dr, df), PieceKind::Knight))
    {
        return true;
    }
    if KING_DELTAS
        .iter()
        .any(|&(dr, df)| is(target.offset(dr, df), PieceKind::King))
    {
        return true;
    }
    let slides = |dirs: &[(i8, i8)], kinds: [PieceKind; 2]| {
        dirs.iter().any(|&(dr, df)| {
            let mut cur = target.offset(dr, df);
            while let Some(s) = cur {
                if let Some(p) = board.get(s) {
                    return p.color == by && kinds.contains(&p.kind);
                }
                cur = s.offset(dr, df);
            }
            false
        })
    };
    slides(&ROOK_DIRS, [PieceKind::Rook, PieceKind::Queen])
        || slides(&BISHOP_DIRS, [PieceKind::Bishop, PieceKind::Queen])
}

pub fn in_check(board: &Board, color: Color) -> bool {
    board
        .king_square(color)
        .is_some_and(|k| is_attacked(board, k, color.opposite()))
}

/// Pseudo-legal moves for the side to move (own king may be left in check).
pub fn pseudo_legal_moves(board: &Board) -> Vec<MoveRecord> {
    let us = board.side_to_move;
    let mut moves = Vec::with_capacity(48);
    for (from, piece) in board.pieces().filter(|(_, p)| p.color == us) {
        match piece.kind {
            PieceKind::Pawn => pawn_moves(board, from, us, &mut moves),
            PieceKind::Knight => leaper_moves(board, from, us, &KNIGHT_DELTAS, &mut moves),
            PieceKind::King => {
                leaper_moves(board, from, us, &KING_DELTAS, &mut moves);
                castling_moves(board, from, us, &mut moves);
            }
            PieceKind::Bishop => slider_moves(board, from, us, &BISHOP_DIRS, &mut moves),
            PieceKind::Rook => slider_moves(board, from, us, &ROOK_DIRS, &mut moves),
            PieceKind::Queen => {
                slider_moves(board, from, us, &BISHOP_DIRS, &mut moves);
                slider_moves(board, from, us, &ROOK_DIRS, &mut moves);
            }
        }
    }
    moves
}

pub fn legal_moves(board: &Board) -> Vec<MoveRecord> {
    let us = board.side_to_move;
    pseudo_legal_moves(board)
        .into_iter()
        .filter(|m| !in_check(&apply_unchecked(board, *m), us))
        .collect()
}

pub fn is_legal(board: &Board, mv: MoveRecord) -> bool {
    legal_moves(board).contains(&mv)
}

fn push_pawn_move(from: Square, to: Square, moves: &mut Vec<MoveRecord>) {
    if to.rank() == 0 || to.rank() == 7 {
        for kind in [PieceKind::Queen, PieceKind::Rook, PieceKind::Bishop, PieceKind::Knight] {
            moves.push(MoveRecord {
                from,
                to,
                promotion: Some(kind),
            });
        }
    } else {
        moves.push(MoveRecord::new(from, to));
    }
}

fn pawn_moves(board: &Board, from: Square, us: Color, moves: &mut Vec<MoveRecord>) {
    let dir = pawn_dir(us);
    let start_rank = if us == Color::White { 1 } else { 6 };
    if let Some(one) = from.offset(dir, 0) {
        if board.get(one).is_none() {
            push_pawn_move(from, one, moves);
            if from.rank() == start_rank {
                if let Some(two) = one.offset(dir, 0) {
                    if board.get(two).is_none() {
                        moves.push(MoveRecord::new(from, two));
                    }
                }
            }
        }
    }
    for df in [-1, 1] {
        if let Some(to) = from.offset(dir, df) {
            let capture = board.get(to).is_some_and(|p| p.color != us);
            if capture || board.en_passant == Some(to) {
                push_pawn_move(from, to, moves);
            }
        }
    }
}

fn leaper_moves(board: &Board, from: Square, us: Color, deltas: &[(i8, i8)], moves: &mut Vec<MoveRecord>) {
    for &(dr, df) in deltas {
        if let Some(to) = from.offset(dr, df) {
            if board.get(to).is_none_or(|p| p.color != us) {
                moves.push(MoveRecord::new(from, to));
            }
        }
    }
}

fn slider_moves(board: &Board, from: Square, us: Color, dirs: &[(i8, i8)], moves: &mut Vec<MoveRecord>) {
    for &(dr, df) in dirs {
        let mut cur = from.offset(dr, df);
        while let Some(to) = cur {
            match board.get(to) {
                None => moves.push(MoveRecord::new(from, to)),
                Some(p) => {
                    if p.color != us {
                        moves.push(MoveRecord::new(from, to));
                    }
                    break;
                }
            }
            cur = to.offset(dr, df);
        }
    }
}

fn castling_moves(board: &Board, from: Square, us: Color, moves: &mut Vec<MoveRecord>) {
    let home = if us == Color::White { 0 } else { 7 };
    if from != Square::from_coords(home, 4).unwrap() {
        return;
    }
    let them = us.opposite();
    let empty = |files: &[u8]| {
        files
            .iter()
            .all(|&f| board.get(Square::from_coords(home, f).unwrap()).is_none())
    };
    let safe = |files: &[u8]| {
        files
            .iter()
            .all(|&f| !is_attacked(board, Square::from_coords(home, f).unwrap(), them))
    };
    let rook_at = |f: u8| board.get(Square::from_coords(home, f).unwrap()) == Some(Piece::new(PieceKind::Rook, us));
    if board.castling.kingside(us) && rook_at(7) && empty(&[5, 6]) && safe(&[4, 5, 6]) {
        moves.push(MoveRecord::new(from, Square::from_coords(home, 6).unwrap()));
    }
    if board.castling.queenside(us) && rook_at(0) && empty(&[1, 2, 3]) && safe(&[4, 3, 2]) {
        moves.push(MoveRecord::new(from, Square::from_coords(home, 2).unwrap()));
    }
}

/// Applies a move without checking legality. The move must at least be
/// pseudo-legal for the result to be meaningful.
pub fn apply_unchecked(board: &Board, mv: MoveRecord) -> Board {
    let mut next = board.clone();
    let Some(piece) = board.get(mv.from) else {
        return next;
    };
    let us = piece.color;
    next.set(mv.from, None);

    // En passant capture removes the pawn behind the target square.
    if piece.kind == PieceKind::Pawn
        && board.en_passant == Some(mv.to)
        && mv.from.file() != mv.to.file()
        && board.get(mv.to).is_none()
    {
        if let Some(victim) = mv.to.offset(-pawn_dir(us), 0) {
            next.set(victim, None);
        }
    }

    // Castling moves the rook as well.
    if piece.kind == PieceKind::King && (mv.from.file() as i8 - mv.to.file() as i8).abs() == 2 {
        let rank = mv.from.rank();
        let (rook_from, rook_to) = if mv.to.file() == 6 { (7, 5) } else { (0, 3) };
        let rook_from = Square::from_coords(rank, rook_from).unwrap();
        let rook_to = Square::from_coords(rank, rook_to).unwrap();
        next.set(rook_to, next.get(rook_from));
        next.set(rook_from, None);
    }

    let placed = match mv.promotion {
        Some(kind) if piece.kind == PieceKind::Pawn => Piece::new(kind, us),
        _ => piece,
    };
    next.set(mv.to, Some(placed));

    next.en_passant = None;
    if piece.kind == PieceKind::Pawn && (mv.from.rank() as i8 - mv.to.rank() as i8).abs() == 2 {
        next.en_passant = mv.from.offset(pawn_dir(us), 0);
    }

    if piece.kind == PieceKind::King {
        next.castling.clear(us);
    }
    for (idx, name) in ["h1", "a1", "h8", "a8"].iter().enumerate() {
        let s = Square::parse(name).unwrap();
        if mv.from == s || mv.to == s {
            next.castling.0[idx] = false;
        }
    }

    next.side_to_move = us.opposite();
    next
}

/// Applies `mv` if it is legal in `board`.
pub fn apply_legal(board: &Board, mv: MoveRecord) -> Option<Board> {
    is_legal(board, mv).then(|| apply_unchecked(board, mv))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ongoing,
    Checkmate,
    Stalemate,
}

pub fn outcome(board: &Board) -> Outcome {
    if !legal_moves(board).is_empty() {
        Outcome::Ongoing
    } else if in_check(board, board.side_to_move) {
        Outcome::Checkmate
    } else {
        Outcome::Stalemate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chess::fen::parse_fen;

    fn perft(board: &Board, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        legal_moves(board)
            .into_iter()
            .map(|m| perft(&apply_unchecked(board, m), depth - 1))
            .sum()
    }

    #[test]
    fn perft_initial() {
        let b = Board::initial();
        assert_eq!(perft(&b, 1), 20);
        assert_eq!(perft(&b, 2), 400);
        assert_eq!(perft(&b, 3), 8902);
    }

    // Standard "kiwipete" position exercising castling, en passant and promotions.
    #[test]
    fn perft_kiwipete() {
        let b = parse_fen("r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1").unwrap();
        assert_eq!(perft(&b, 1), 48);
        assert_eq!(perft(&b, 2), 2039);
        assert_eq!(perft(&b, 3), 97862);
    }

    #[test]
    fn perft_position_3() {
        let b = parse_fen("8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1").unwrap();
        assert_eq!(perft(&b, 1), 14);
        assert_eq!(perft(&b, 2), 191);
        assert_eq!(perft(&b, 3), 2812);
        assert_eq!(perft(&b, 4), 43238);
    }

    #[test]
    fn en_passant_capture_removes_pawn() {
        let b = parse_fen("4k3/8/8/3pP3/8/8/8/4K3 w - d6 0 1").unwrap();
        let mv = MoveRecord::new(Square::parse("e5").unwrap(), Square::parse("d6").unwrap());
        let next = apply_legal(&b, mv).unwrap();
        assert!(next.get(Square::parse("d5").unwrap()).is_none());
        assert_eq!(next.piece_count(), 3);
    }

    #[test]
    fn castling_moves_rook() {
        let b = parse_fen("4k3/8/8/8/8/8/8/4K2R w K - 0 1").unwrap();
        let mv = MoveRecord::new(Square::parse("e1").unwrap(), Square::parse("g1").unwrap());
        let next = apply_legal(&b, mv).unwrap();
        assert_eq!(
            next.get(Square::parse("f1").unwrap()),
            Some(Piece::new(PieceKind::Rook, Color::White))
        );
        assert!(!next.castling.kingside(Color::White));
    }

    #[test]
    fn checkmate_detection() {
        // Fool's mate.
        let b = parse_fen("rnb1kbnr/pppp1ppp/8/4p3/6Pq/5P2/PPPPP2P/RNBQKBNR w KQkq - 1 3").unwrap();
        assert_eq!(outcome(&b), Outcome::Checkmate);
        let stale = parse_fen("7k/5Q2/6K1/8/8/8/8/8 b - - 0 1").unwrap();
        assert_eq!(outcome(&stale), Outcome::Stalemate);
    }
}
