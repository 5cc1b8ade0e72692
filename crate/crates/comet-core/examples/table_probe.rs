use std::time::Instant;
fn main() {
    let mk = |n: usize| comet_core::Dataset {
        states: (0..n)
            .map(|i| {
                let mut c = vec![0u8; 32];
                c[3] = (i * 7 % 200) as u8 + 20;
                c[5] = if i % 2 == 0 { 2 } else { 254 };
                c[0] = (i * 13 % 160) as u8 + 16;
                c[1] = (i * 11 % 140) as u8 + 22;
                c[2] = (i * 5 % 136) as u8 + 22;
                c[9] = 255;
                c
            })
            .collect(),
        actions: (0..n).map(|i| ((i % 7) % 3) as u8).collect(),
        labels: (0..n)
            .map(|i| {
                let y = (i * 7 % 200) as i32 + 20;
                let vy = if i % 2 == 0 { 2 } else { -2 };
                (y + vy).rem_euclid(256) as u8
            })
            .collect(),
        action_set: vec![0, 1, 2],
    };
    let data = mk(5000);
    let t = Instant::now();
    let front = comet_core::search_equations(&data, &comet_core::SearchConfig::default());
    println!("first (builds table): {:?}", t.elapsed());
    let t = Instant::now();
    let front2 = comet_core::search_equations(&data, &comet_core::SearchConfig::default());
    println!("second: {:?}", t.elapsed());
    assert_eq!(front, front2);
    for (e, acc) in &front {
        println!("  acc {:.4} cx {:2} {}", acc, e.complexity(), e);
    }
    let small = mk(300);
    let t = Instant::now();
    let _ = comet_core::search_equations(&small, &comet_core::SearchConfig::default());
    println!("small (300 rows): {:?}", t.elapsed());
}
