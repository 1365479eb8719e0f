//! BLEU-4, ROUGE-L and CIDEr-D on a toy corpus.

use vidcap::metrics::{evaluate, MetricConfig};

fn main() -> vidcap::Result<()> {
    let ids = vec!["v1".to_string(), "v2".to_string(), "v3".to_string()];
    let refs = vec![
        vec!["a man is running down the road", "a man runs on the road"],
        vec!["a cat is sleeping on a bed", "the cat sleeps in the bed"],
        vec!["a woman is cooking in the kitchen", "someone is cooking food"],
    ];
    let hyps = ["a man is running on the road", "a cat is on a bed", "a man is cooking"];
    let r = evaluate(&ids, &hyps, &refs, &MetricConfig::default())?;
    print!("{}", r.to_text());
    Ok(())
}
