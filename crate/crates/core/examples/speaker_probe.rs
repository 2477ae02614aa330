//! Speaker classifier probe on text where speakers differ only in word choice.

use rand::seq::IndexedRandom;
use rand::Rng;
use speaker_nmt::eval::{holdout_split, probe_accuracy, train_classifier, ClassifierConfig};
use speaker_nmt::rng;

fn main() -> speaker_nmt::Result<()> {
    const SHARED: [&str; 12] = ["we", "the", "a", "talk", "about", "people", "world", "see", "make", "think", "it", "is"];
    // each speaker has two habitual words
    const HABITS: [[&str; 2]; 4] = [["basically", "folks"], ["indeed", "colleagues"], ["like", "guys"], ["thus", "friends"]];
    let mut r = rng::seeded(8);
    let mut sentences = Vec::new();
    let mut labels = Vec::new();
    for i in 0..800 {
        let s = i % HABITS.len();
        let mut words: Vec<String> = (0..r.random_range(5..10)).map(|_| SHARED.choose(&mut r).unwrap().to_string()).collect();
        if r.random_bool(0.7) {
            let at = r.random_range(0..=words.len());
            words.insert(at, HABITS[s][r.random_range(0..2)].to_string());
        }
        sentences.push(words);
        labels.push(s);
    }
    let (train, test) = holdout_split(sentences.len(), 1);
    let pick = |idx: &[usize]| -> (Vec<Vec<String>>, Vec<usize>) {
        (idx.iter().map(|&i| sentences[i].clone()).collect(), idx.iter().map(|&i| labels[i]).collect())
    };
    let ((xs, ys), (xt, yt)) = (pick(&train), pick(&test));
    let cfg = ClassifierConfig { epochs: 20, ..ClassifierConfig::default() };
    let clf = train_classifier(&xs, &ys, HABITS.len(), &cfg, 1)?;
    println!("{} n-gram vectors of dim {}", clf.num_ngrams(), cfg.dim);
    println!("held-out accuracy {:.3} (chance 0.25, ceiling about 0.78)", probe_accuracy(&clf, &xt, &yt)?);
    Ok(())
}
