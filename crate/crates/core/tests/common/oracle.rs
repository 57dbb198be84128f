//! Brute-force reference tallies working directly on preference lists.
//! They share only the tie-break rules with the library, not its code.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

pub type Profile = Vec<Vec<u32>>;

pub fn random_profile<R: Rng>(rng: &mut R, candidates: usize, voters: usize) -> Profile {
    (0..voters)
        .map(|_| {
            let mut p: Vec<u32> = (1..=candidates as u32).collect();
            p.shuffle(rng);
            p
        })
        .collect()
}

/// First place earns `n`, last place earns 1. Highest total wins, lowest
/// cid on ties, nothing when no ballot was cast.
pub fn borda(candidates: usize, profile: &Profile) -> Option<u32> {
    let mut score = vec![0u64; candidates + 1];
    for ballot in profile {
        for (pos, &c) in ballot.iter().enumerate() {
            score[c as usize] += (candidates - pos) as u64;
        }
    }
    let best = *score.iter().max()?;
    if best == 0 {
        return None;
    }
    (1..=candidates as u32).find(|&c| score[c as usize] == best)
}

/// `d[a][b]`: ballots ranking `a` above `b`.
pub fn pairwise(candidates: usize, profile: &Profile) -> Vec<Vec<u64>> {
    let mut d = vec![vec![0u64; candidates + 1]; candidates + 1];
    for ballot in profile {
        for i in 0..ballot.len() {
            for j in i + 1..ballot.len() {
                d[ballot[i] as usize][ballot[j] as usize] += 1;
            }
        }
    }
    d
}

/// Ranked pairs with a transitive-closure cycle test.
#[allow(clippy::needless_range_loop)]
pub fn ranked_pairs(candidates: usize, profile: &Profile) -> Option<u32> {
    if profile.is_empty() {
        return None;
    }
    let n = candidates;
    let d = pairwise(n, profile);
    let mut pairs = Vec::new();
    for a in 1..=n {
        for b in a + 1..=n {
            if d[a][b] > d[b][a] {
                pairs.push((a, b, d[a][b] - d[b][a]));
            } else if d[b][a] > d[a][b] {
                pairs.push((b, a, d[b][a] - d[a][b]));
            }
        }
    }
    pairs.sort_by_key(|p| std::cmp::Reverse(p.2));

    let mut locked = vec![vec![false; n + 1]; n + 1];
    let mut reach = vec![vec![false; n + 1]; n + 1];
    for (w, l, _) in pairs {
        if w == l || reach[l][w] {
            continue;
        }
        locked[w][l] = true;
        // close over the new edge: everything reaching w now reaches
        // everything l reaches
        let from: Vec<usize> = (1..=n).filter(|&x| x == w || reach[x][w]).collect();
        let to: Vec<usize> = (1..=n).filter(|&y| y == l || reach[l][y]).collect();
        for &x in &from {
            for &y in &to {
                reach[x][y] = true;
            }
        }
    }
    (1..=n).find(|&c| (1..=n).all(|x| !locked[x][c])).map(|c| c as u32)
}

pub fn condorcet_winner(candidates: usize, profile: &Profile) -> Option<u32> {
    let d = pairwise(candidates, profile);
    (1..=candidates).find(|&c| (1..=candidates).all(|o| o == c || d[c][o] > d[o][c])).map(|c| c as u32)
}
