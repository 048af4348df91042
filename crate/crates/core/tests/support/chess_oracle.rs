//! Brute-force label oracle over the FEN placement grid, plus random
//! position samplers. Shared by the core tests and the acceptance suite.

use neurodenote::chess::movegen::{apply_unchecked, in_check};
use neurodenote::chess::{legal_moves, to_fen, Board, Color, Piece, PieceKind, Square};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Board read back from FEN placement text: `grid[rank][file]`, uppercase
/// letters for white.
pub type Grid = [[Option<char>; 8]; 8];

pub fn grid_of(board: &Board) -> Grid {
    let fen = to_fen(board);
    let placement = fen.split(' ').next().unwrap();
    let mut g: Grid = [[None; 8]; 8];
    for (i, row) in placement.split('/').enumerate() {
        let rank = 7 - i;
        let mut file = 0;
        for c in row.chars() {
            if let Some(d) = c.to_digit(10) {
                file += d as usize;
            } else {
                g[rank][file] = Some(c);
                file += 1;
            }
        }
    }
    g
}

fn value(c: char) -> i32 {
    match c.to_ascii_lowercase() {
        'p' => 1,
        'n' | 'b' => 3,
        'r' => 5,
        'q' => 9,
        _ => 0,
    }
}

pub fn oracle_material(g: &Grid) -> bool {
    let mut diff = 0;
    for c in g.iter().flatten().flatten() {
        diff += if c.is_ascii_uppercase() { value(*c) } else { -value(*c) };
    }
    diff > 0
}

fn in_bounds(r: i32, f: i32) -> bool {
    (0..8).contains(&r) && (0..8).contains(&f)
}

/// Every square a black piece on `(r, f)` attacks, found by walking the board.
fn black_attacks(g: &Grid, r: i32, f: i32, c: char) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    let ray = |dr: i32, df: i32, slide: bool, out: &mut Vec<(i32, i32)>| {
        let (mut rr, mut ff) = (r + dr, f + df);
        while in_bounds(rr, ff) {
            out.push((rr, ff));
            if !slide || g[rr as usize][ff as usize].is_some() {
                break;
            }
            rr += dr;
            ff += df;
        }
    };
    let rook = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    let bishop = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
    match c {
        'p' => {
            for df in [-1, 1] {
                if in_bounds(r - 1, f + df) {
                    out.push((r - 1, f + df));
                }
            }
        }
        'n' => {
            for (dr, df) in [(1, 2), (2, 1), (-1, 2), (-2, 1), (1, -2), (2, -1), (-1, -2), (-2, -1)] {
                ray(dr, df, false, &mut out);
            }
        }
        'b' => bishop.iter().for_each(|&(dr, df)| ray(dr, df, true, &mut out)),
        'r' => rook.iter().for_each(|&(dr, df)| ray(dr, df, true, &mut out)),
        'q' => rook
            .iter()
            .chain(&bishop)
            .for_each(|&(dr, df)| ray(dr, df, true, &mut out)),
        'k' => rook
            .iter()
            .chain(&bishop)
            .for_each(|&(dr, df)| ray(dr, df, false, &mut out)),
        _ => {}
    }
    out
}

pub fn oracle_check(g: &Grid) -> bool {
    let mut king = None;
    for r in 0..8 {
        for f in 0..8 {
            if g[r][f] == Some('K') {
                king = Some((r as i32, f as i32));
            }
        }
    }
    let king = king.expect("white king present");
    for r in 0..8 {
        for f in 0..8 {
            if let Some(c) = g[r][f] {
                if c.is_ascii_lowercase() && black_attacks(g, r as i32, f as i32, c).contains(&king) {
                    return true;
                }
            }
        }
    }
    false
}

pub fn oracle_insufficient(g: &Grid) -> bool {
    let white: Vec<char> = g
        .iter()
        .flatten()
        .flatten()
        .copied()
        .filter(|c| c.is_ascii_uppercase() && *c != 'K')
        .collect();
    matches!(white.as_slice(), [] | ['B'] | ['N'])
}

pub fn random_playout(rng: &mut ChaCha8Rng) -> Board {
    let mut b = Board::initial();
    let plies = rng.random_range(0..160);
    for _ in 0..plies {
        let moves = legal_moves(&b);
        let Some(&mv) = moves.choose(rng) else { break };
        b = apply_unchecked(&b, mv);
    }
    b
}

/// Kings plus a handful of random pieces; rejected if the side that just
/// moved is left in check.
pub fn random_sparse(rng: &mut ChaCha8Rng) -> Board {
    loop {
        let mut b = Board::empty();
        let mut used = Vec::new();
        let place = |b: &mut Board, p: Piece, rng: &mut ChaCha8Rng, used: &mut Vec<usize>| loop {
            let i = rng.random_range(0..64usize);
            let sq = Square::new(i as u8).unwrap();
            if used.contains(&i) || (p.kind == PieceKind::Pawn && (sq.rank() == 0 || sq.rank() == 7)) {
                continue;
            }
            used.push(i);
            b.set(sq, Some(p));
            break;
        };
        place(
            &mut b,
            Piece {
                kind: PieceKind::King,
                color: Color::White,
            },
            rng,
            &mut used,
        );
        place(
            &mut b,
            Piece {
                kind: PieceKind::King,
                color: Color::Black,
            },
            rng,
            &mut used,
        );
        for _ in 0..rng.random_range(0..5) {
            let kind = PieceKind::ALL[rng.random_range(0..5)];
            let color = if rng.random_bool(0.5) {
                Color::White
            } else {
                Color::Black
            };
            place(&mut b, Piece { kind, color }, rng, &mut used);
        }
        b.side_to_move = if rng.random_bool(0.5) {
            Color::White
        } else {
            Color::Black
        };
        if b.validate().is_ok() && !in_check(&b, b.side_to_move.opposite()) {
            return b;
        }
    }
}

pub fn sample() -> Vec<Board> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..1000)
        .map(|i| {
            if i % 2 == 0 {
                random_playout(&mut rng)
            } else {
                random_sparse(&mut rng)
            }
        })
        .collect()
}
