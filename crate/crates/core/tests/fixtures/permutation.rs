// Independent permutation oracle for two-sample location tests.
//
// The statistic is the studentized mean difference, computed locally so the
// oracle shares no code with the implementation it checks. Counting is
// strict (permutation statistic > observed statistic, with a tiny float
// guard), over every label assignment when the exact enumeration is small
// enough, otherwise over seeded Monte-Carlo shuffles. Under this convention
// a maximally separated observation yields p = 0.

pub fn perm_abs_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let var = |xs: &[f64], m: f64| {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let se2 = var(a, ma) / a.len() as f64 + var(b, mb) / b.len() as f64;
    if se2 == 0.0 {
        return if ma == mb { 0.0 } else { f64::INFINITY };
    }
    ((ma - mb) / se2.sqrt()).abs()
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// Two-sided permutation p-value for the difference in group locations.
pub fn permutation_p(a: &[f64], b: &[f64], mc_rounds: usize, seed: u64) -> f64 {
    let observed = perm_abs_statistic(a, b);
    let guard = 1e-9 * observed.max(1.0);
    let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let na = a.len();
    let total = pooled.len();

    if binomial(total, na) <= 200_000 {
        // Exact enumeration over index combinations.
        let mut indices: Vec<usize> = (0..na).collect();
        let mut exceed = 0u64;
        let mut count = 0u64;
        loop {
            let in_a: Vec<bool> = {
                let mut mask = vec![false; total];
                for &i in &indices {
                    mask[i] = true;
                }
                mask
            };
            let group_a: Vec<f64> =
                (0..total).filter(|i| in_a[*i]).map(|i| pooled[i]).collect();
            let group_b: Vec<f64> =
                (0..total).filter(|i| !in_a[*i]).map(|i| pooled[i]).collect();
            if perm_abs_statistic(&group_a, &group_b) > observed + guard {
                exceed += 1;
            }
            count += 1;
            // Advance to the next combination in lexicographic order.
            let mut pos = na;
            loop {
                if pos == 0 {
                    return exceed as f64 / count as f64;
                }
                pos -= 1;
                if indices[pos] != pos + total - na {
                    break;
                }
            }
            indices[pos] += 1;
            for i in pos + 1..na {
                indices[i] = indices[i - 1] + 1;
            }
        }
    }

    let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..total).collect();
    let mut exceed = 0u64;
    for _ in 0..mc_rounds {
        for i in (1..total).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            order.swap(i, j);
        }
        let group_a: Vec<f64> = order[..na].iter().map(|&i| pooled[i]).collect();
        let group_b: Vec<f64> = order[na..].iter().map(|&i| pooled[i]).collect();
        if perm_abs_statistic(&group_a, &group_b) > observed + guard {
            exceed += 1;
        }
    }
    exceed as f64 / mc_rounds as f64
}

/// Standard normal draw via Box-Muller, fed by the caller's seeded RNG.
pub fn normal_draw(rng: &mut rand_chacha::ChaCha20Rng) -> f64 {
    let u1: f64 = rand::Rng::gen_range(rng, f64::MIN_POSITIVE..1.0);
    let u2: f64 = rand::Rng::gen_range(rng, 0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
