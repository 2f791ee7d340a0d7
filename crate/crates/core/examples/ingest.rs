//! Filters a post dump and gates it with a small story classifier.
use narrative_arc::encoders::{ReferenceEncoder, ReferenceMode};
use narrative_arc::ingest::{
    classify_story, filter_posts, gate_corpus, train_story_classifier, ClassifierConfig, FilterConfig, RawPost,
};

fn post(id: usize, title: &str, body: &str, tags: &[&str]) -> RawPost {
    RawPost {
        id: format!("t3_{id}"),
        title: title.into(),
        body: body.into(),
        tags: tags.iter().map(|t| t.to_string()).collect(),
        over_18: false,
        subreddit: "offmychest".into(),
        created_utc: 1_560_000_000 + id as i64,
    }
}

const STORIES: [&str; 4] = [
    "I moved to a new city last spring. I knew nobody there. One night my car broke down. A stranger stopped and helped me. We are now close friends.",
    "My father and I had not spoken in years. I finally called him on his birthday. He cried on the phone. I cried too. We meet every Sunday now.",
    "I failed my driving test twice. I was ready to give up. My sister drove with me every evening for a month. I passed the third time. She bought me a cake.",
    "I lost my wallet at the station yesterday. I searched everywhere and panicked. An old man walked up holding it. He refused any reward. I still think about him.",
];
const OTHER: [&str; 4] = [
    "What is the best laptop for programming under 800 dollars? Any suggestions welcome. Thanks in advance.",
    "Selling two concert tickets for Saturday. Message me if interested. Price is negotiable.",
    "Does anyone know when the library reopens? The website says nothing. Thanks.",
    "Looking for recommendations on hiking boots. I need waterproof ones. Budget is flexible.",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let encoder = ReferenceEncoder::new(64, 0, ReferenceMode::SentenceLevel);
    let mut labelled: Vec<(String, bool)> = Vec::new();
    for _ in 0..6 {
        labelled.extend(STORIES.iter().map(|s| (s.to_string(), true)));
        labelled.extend(OTHER.iter().map(|s| (s.to_string(), false)));
    }
    let config = ClassifierConfig {
        lr: 1e-2,
        epochs: 100,
        ..Default::default()
    };
    let (classifier, history) = train_story_classifier(&labelled, &encoder, &config)?;
    println!("story classifier: best epoch {}", history.best_epoch);

    let posts = vec![
        post(1, "A kind stranger", STORIES[0], &[]),
        post(2, "Laptop advice", OTHER[0], &[]),
        post(3, "[NSFW] long night", STORIES[1], &[]),
        post(4, "Too short", "I tripped. Ouch.", &[]),
        post(5, "My sister", STORIES[2], &["Wholesome"]),
        post(6, "Tickets", OTHER[1], &["sale"]),
    ];
    let filter = FilterConfig {
        banned_tags: ["nsfw".to_string(), "sale".to_string()].into(),
        ..Default::default()
    };
    let kept = filter_posts(posts.clone(), &filter);
    println!("{} of {} posts pass the filters", kept.len(), posts.len());
    for p in &kept {
        println!("  {:<8} story probability {:.2}", p.id, classify_story(&p.body, &classifier, &encoder)?);
    }
    let corpus = gate_corpus(&kept, &classifier, &encoder, &filter)?;
    println!("gated corpus: {:?}", corpus.ids());
    Ok(())
}
