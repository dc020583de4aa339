use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simulacra_core::character::{
    character_distance, kendall_tau, sample_profile, AttributePools, CharacterProfile, TraitPool,
};
use simulacra_core::conformity::{run_experiment, Condition, TrialSuite};
use simulacra_core::eval::{
    aggregate_observer, compute_icc, generate_questionnaire, mean_squares, score_self_report, AggregationConfig,
    AnswerKey, Grade, JudgeAssignment, JudgingKind, MatchVerdict, ObserverCase, PointScheme, QuestionKind,
    Questionnaire, RatingsMatrix, Submission,
};
use simulacra_core::llm::{bindings, ids, CallContext, Gateway, GenerationParams, MockProvider, TemplateLibrary};
use simulacra_core::macm::{
    build_long_term_memory, retrieve_memories, BuildConfig, ItemKind, MacmConfig, MacmSession, MemorySystem,
};
use simulacra_core::simulacrum::{Method, PromptSimulacrum, Simulacrum, Stimulus};
use simulacra_core::store::{ArtifactKind, ProjectStore, StoreError, TaskState};
use simulacra_core::story::{
    forge_story, score_all, score_chunk, AutoApprove, ForgeConfig, ReviewDecision, ReviewKind, ReviewRequest,
    ScoreWeights,
};

fn profile(seed: u64) -> CharacterProfile {
    sample_profile(&AttributePools::bundled(), &TraitPool::bundled(), seed).unwrap()
}

fn questionnaire(seed: u64) -> Questionnaire {
    let (pools, traits) = (AttributePools::bundled(), TraitPool::bundled());
    generate_questionnaire(&profile(seed), &pools, &traits, &PointScheme::default(), seed).unwrap()
}

fn story(paragraphs: usize) -> String {
    (0..paragraphs)
        .map(|i| format!("Paragraph {i} recalls a season of the character's life in some detail."))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn pair_count_tau(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let bi = b.iter().position(|&x| x == a[i]).unwrap() as i64;
            let bj = b.iter().position(|&x| x == a[j]).unwrap() as i64;
            s += (bj - bi).signum();
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kendall_tau_matches_pair_count_for_n8(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a: Vec<usize> = (0..8).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        prop_assert!((kendall_tau(&a, &b).unwrap() - pair_count_tau(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn distance_symmetric_and_bounded(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (a, b) = (profile(s1), profile(s2));
        let ab = character_distance(&a, &b);
        let ba = character_distance(&b, &a);
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab.total));
        prop_assert!((ab.tau_normalized - (ab.tau + 1.0) / 2.0).abs() < 1e-15);
        prop_assert_eq!(character_distance(&a, &a).total, 0.0);
    }

    #[test]
    fn mock_generation_is_deterministic(seed in any::<u64>(), name in "[A-Za-z ]{1,20}") {
        let g = Gateway::mock();
        let p = profile(seed);
        let values = bindings([("character_name", name.clone()), ("basic_information", format!("{name} is 30."))]);
        let ctx = CallContext::seeded(seed).with_extra(&p.attribute_bindings());
        let params = GenerationParams::data_generation();
        let a = g.generate(ids::BIOGRAPHY, &values, &ctx, &params).unwrap();
        let b = g.generate(ids::BIOGRAPHY, &values, &ctx, &params).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(g.render(ids::BIOGRAPHY, &values).unwrap(), g.render(ids::BIOGRAPHY, &values).unwrap());
    }

    #[test]
    fn chunk_score_ignores_positive_rescaling(
        chunk in vector(6), story_sum in vector(6), own in vector(6),
        others in proptest::collection::vec(vector(6), 0..5),
        scale in proptest::collection::vec(0.01f64..100.0, 8),
    ) {
        let w = ScoreWeights::default();
        let base = score_chunk(&chunk, &story_sum, &own, &others, &w).unwrap();
        let mul = |v: &[f64], c: f64| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let scaled_others: Vec<Vec<f64>> = others.iter().enumerate().map(|(i, o)| mul(o, scale[3 + i])).collect();
        let scaled = score_chunk(&mul(&chunk, scale[0]), &mul(&story_sum, scale[1]), &mul(&own, scale[2]), &scaled_others, &w).unwrap();
        prop_assert!((base.score - scaled.score).abs() < 1e-9);
    }

    #[test]
    fn retrieval_never_exceeds_two(reply in "[0-9a-z ,.\\[\\]]{0,80}", seed in any::<u64>()) {
        let store = build_long_term_memory(&story(24), &profile(1), &Gateway::mock(), &BuildConfig::default()).unwrap();
        let provider = MockProvider::bundled().with_fixture(ids::MEMORY_AGENT, None, [reply]);
        let gw = Gateway::new(Arc::new(provider), TemplateLibrary::bundled());
        if let Ok(r) = retrieve_memories("anything", &store, &gw, &CallContext::seeded(seed), &GenerationParams::evaluation()) {
            prop_assert!(!r.records.is_empty() && r.records.len() <= 2);
        }
    }

    #[test]
    fn working_memory_conserves_items(
        capacity in 1usize..6, threshold in 1u32..4,
        ops in proptest::collection::vec((0u8..5, any::<u16>()), 0..80),
    ) {
        let mut m = MemorySystem::new(capacity, threshold);
        let mut created = 0u64;
        let mut rehearsed = 0u64;
        for (turn, (op, pick)) in ops.into_iter().enumerate() {
            match op {
                0 | 1 => {
                    let kind = if pick % 2 == 0 { ItemKind::Turn } else { ItemKind::RetrievedMemory };
                    m.add(kind, turn, "x");
                    created += 1;
                }
                2 => {
                    let st = m.short_term.items();
                    if !st.is_empty() {
                        let id = st[pick as usize % st.len()].item.id;
                        m.recall(id, turn).unwrap();
                    }
                }
                3 => { m.flush_working(turn); }
                _ => {
                    if let Some(item) = m.eligible().first() {
                        m.mark_rehearsed(item.id).unwrap();
                        rehearsed += 1;
                    }
                }
            }
            prop_assert!(m.working.len() <= capacity);
            prop_assert!(m.conserved());
            prop_assert_eq!(m.working.len() as u64 + m.short_term.len() as u64 + rehearsed, created);
        }
    }

    #[test]
    fn record_count_is_ceiling(paragraphs in 1usize..16, granularity in 1usize..5) {
        let config = BuildConfig { granularity, ..BuildConfig::default() };
        let store = build_long_term_memory(&story(paragraphs), &profile(3), &Gateway::mock(), &config).unwrap();
        prop_assert_eq!(store.len(), paragraphs.div_ceil(granularity));
        store.validate().unwrap();
    }

    #[test]
    fn self_report_order_free_and_idempotent(seed in any::<u64>(), answered in proptest::collection::vec(any::<bool>(), 15)) {
        let q = questionnaire(seed % 64);
        let replies: Vec<String> = q.items.iter().zip(&answered)
            .map(|(i, &a)| if a { format!("The answer is {}.", i.answer_key.spoken()) } else { "I am not sure.".into() })
            .collect();
        let first = score_self_report(&replies, &q).unwrap();
        prop_assert_eq!(&first, &score_self_report(&replies, &q).unwrap());

        let mut order: Vec<usize> = (0..q.items.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = Questionnaire { items: order.iter().map(|&i| q.items[i].clone()).collect(), ..q.clone() };
        let shuffled_replies: Vec<String> = order.iter().map(|&i| replies[i].clone()).collect();
        let second = score_self_report(&shuffled_replies, &shuffled).unwrap();
        prop_assert_eq!(first.breakdown, second.breakdown);
    }

    #[test]
    fn multiple_choice_swap_symmetry(seed in 0u64..64, pick in proptest::collection::vec(any::<bool>(), 8)) {
        let q = questionnaire(seed);
        let item = q.items.iter().find(|i| i.kind == QuestionKind::MultipleChoice).unwrap().clone();
        let labels: Vec<String> = item.option_labels().into_iter().collect();
        let answer: BTreeSet<String> = labels.iter().zip(&pick).filter(|(_, p)| **p).map(|(l, _)| l.clone()).collect();
        prop_assume!(!answer.is_empty());
        let AnswerKey::Many(key) = item.answer_key.clone() else { panic!("multiple choice key") };
        let reply = |set: &BTreeSet<String>| format!("The answer is {}.", AnswerKey::Many(set.clone()).spoken());
        let single = |key: BTreeSet<String>| Questionnaire {
            items: vec![simulacra_core::eval::QuestionnaireItem { answer_key: AnswerKey::Many(key), ..item.clone() }],
            ..q.clone()
        };
        let forward = score_self_report(&[reply(&answer)], &single(key.clone())).unwrap().breakdown.sum;
        let backward = score_self_report(&[reply(&key)], &single(answer.clone())).unwrap().breakdown.sum;
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn icc_shift_properties(seed in any::<u64>(), shift in 0.5f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..12);
        let k = rng.random_range(2..5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| { let b: f64 = rng.random_range(0.0..50.0); (0..k).map(|_| b + rng.random_range(-3.0..3.0)).collect() })
            .collect();
        let m = RatingsMatrix::new(rows.clone()).unwrap();
        let base = compute_icc(&m).unwrap();
        let all: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        prop_assert!((compute_icc(&RatingsMatrix::new(all).unwrap()).unwrap() - base).abs() < 1e-9);

        // Shifting the judge with the highest mean upward widens the judge
        // disagreement; with positive agreement that lowers the ICC.
        let ms = mean_squares(&m);
        prop_assume!(ms.rows > ms.error);
        let top = (0..k).max_by(|&a, &b| {
            let mean = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>();
            mean(a).total_cmp(&mean(b))
        }).unwrap();
        let one: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().enumerate().map(|(j, v)| if j == top { v + shift } else { *v }).collect()).collect();
        prop_assert!(compute_icc(&RatingsMatrix::new(one).unwrap()).unwrap() < base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn expansion_target_replays_from_journal(seed in any::<u64>()) {
        let p = profile(seed);
        let s = forge_story(&p, &ForgeConfig::default().with_iterations(3), &Gateway::mock(), &mut AutoApprove, seed).unwrap();
        for r in &s.iterations {
            let chunks: Vec<Vec<f64>> = r.chunks.iter().map(|c| c.embedding.0.clone()).collect();
            let sums: Vec<Vec<f64>> = r.chunks.iter().map(|c| c.summary_embedding.0.clone()).collect();
            let scores = score_all(&chunks, &sums, &r.story_summary_embedding.0, &r.weights).unwrap();
            let w = &r.weights;
            let best = (0..scores.len())
                .map(|i| (i, w.alpha * scores[i].importance + w.beta * scores[i].elaborateness - w.gamma * scores[i].redundancy))
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            prop_assert_eq!(r.chosen_index(), best.0);
        }
        prop_assert_eq!(s.replay().unwrap(), s.text);
    }

    #[test]
    fn turn_indices_resolve_in_store(seed in any::<u64>()) {
        let p = profile(seed);
        let store = build_long_term_memory(&story(8), &p, &Gateway::mock(), &BuildConfig::default()).unwrap();
        let indices: BTreeSet<String> = store.records.iter().map(|r| r.index.clone()).collect();
        let mut s = MacmSession::new(p, "bio", store, MacmConfig::default()).unwrap();
        for q in ["Where did you grow up?", "What do you fear?", "Tell me about work."] {
            let t = s.respond(&Gateway::mock(), &Stimulus::new(q)).unwrap();
            prop_assert!(t.retrieval.indices.iter().all(|i| indices.contains(i)));
        }
    }

    #[test]
    fn scripted_conformity_rates_are_exact(resolute in 0usize..5, compliant in 0usize..5) {
        prop_assume!(resolute + compliant > 0);
        let suite = TrialSuite::bundled();
        let lib = TemplateLibrary::bundled();
        let mut ps: Vec<Box<dyn Simulacrum>> = Vec::new();
        for (i, scenario) in std::iter::repeat_n("resolute", resolute).chain(std::iter::repeat_n("compliant", compliant)).enumerate() {
            ps.push(Box::new(PromptSimulacrum::new(Gateway::mock(), profile(i as u64), "bio").with_scenario(Some(scenario.into()))));
        }
        let r = run_experiment(&mut ps, &suite, &lib, Condition::Group, false).unwrap();
        for t in &r.trial_rates {
            let critical = suite.critical_ordinals().contains(&t.ordinal);
            let want = if critical { resolute as f64 / (resolute + compliant) as f64 } else { 1.0 };
            prop_assert_eq!(t.rate, want);
        }

        let mut ctl: Vec<Box<dyn Simulacrum>> = (0..compliant.max(1))
            .map(|i| Box::new(PromptSimulacrum::new(Gateway::mock(), profile(i as u64), "bio").with_scenario(Some("always-correct".into()))) as Box<dyn Simulacrum>)
            .collect();
        let c = run_experiment(&mut ctl, &suite, &lib, Condition::Control, false).unwrap();
        prop_assert!(c.trial_rates.iter().all(|t| t.rate == 1.0));
    }

    #[test]
    fn final_is_dms_plus_rss(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = JudgeAssignment::default();
        let reaction = "word ".repeat(a.min_reaction_words);
        let mut cases = Vec::new();
        for (i, method) in Method::ALL.iter().cycle().take(rng.random_range(3..10)).enumerate() {
            let mut c = ObserverCase::new("x", *method, &format!("s{i}"), "scenario", "response", seed);
            for _ in 0..2 {
                for slot in c.ready_slots(&a) {
                    let sub = match slot.kind {
                        JudgingKind::PersonalityDescribing => Submission::PersonalityDescribing { descriptions: vec!["d".into(); 5] },
                        JudgingKind::ReactionDescribing => Submission::ReactionDescribing { reaction: reaction.clone() },
                        JudgingKind::DescriptionScoring => Submission::DescriptionScoring {
                            verdicts: (0..5).map(|_| *[MatchVerdict::Correct, MatchVerdict::Partial, MatchVerdict::Incorrect].choose(&mut rng).unwrap()).collect(),
                        },
                        JudgingKind::SimilarityScoring => Submission::SimilarityScoring {
                            grade: *[Grade::A, Grade::B, Grade::C, Grade::D, Grade::E].choose(&mut rng).unwrap(),
                        },
                    };
                    c.apply(&slot, &a, &sub).unwrap();
                }
            }
            cases.push(c);
        }
        let r = aggregate_observer(&cases, &a, &AggregationConfig::default()).unwrap();
        for m in &r.methods {
            prop_assert_eq!(m.final_score, m.dms.average + m.rss.average);
            let mean = |v: &[simulacra_core::eval::JudgeTotal]| v.iter().map(|j| j.total).sum::<f64>() / v.len() as f64;
            prop_assert_eq!(m.dms.average, mean(&m.dms.judges));
            prop_assert_eq!(m.rss.average, mean(&m.rss.judges));
        }
    }

    #[test]
    fn review_queue_only_moves_pending_to_decided(ops in proptest::collection::vec((0usize..3, 0u8..4, 0usize..2), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let ids: Vec<String> = (0..3).map(|i| store.enqueue_review(&ReviewRequest {
            kind: ReviewKind::StoryIteration,
            character: "ada".into(),
            iteration: i + 1,
            attempt: 0,
            chunk_index: Some(0),
            original: "o".into(),
            candidate: "c".into(),
            context: "s".into(),
        }).unwrap()).collect();
        let reviewers = ["alice", "bob"];
        let mut decided: Vec<Option<ReviewDecision>> = vec![None; 3];
        for (task, op, who) in ops {
            let id = &ids[task];
            let before = store.review_task(id).unwrap();
            let result = match op {
                0 => store.claim_review(id, reviewers[who]).map(|_| ()),
                1 => store.submit_review(id, ReviewDecision::approve(reviewers[who])).map(|_| ()),
                2 => store.submit_review(id, ReviewDecision::edit(reviewers[who], "new text")).map(|_| ()),
                _ => store.submit_review(id, ReviewDecision::regenerate(reviewers[who])).map(|_| ()),
            };
            let after = store.review_task(id).unwrap();
            if before.state == TaskState::Decided {
                prop_assert!(result.is_err());
                prop_assert_eq!(&after, &before);
                if op != 0 {
                    prop_assert!(matches!(result, Err(StoreError::AlreadyDecided(_))));
                }
            }
            if after.state == TaskState::Decided {
                let d = after.decision.clone().unwrap();
                match &decided[task] {
                    Some(prev) => prop_assert_eq!(prev, &d),
                    None => decided[task] = Some(d),
                }
            } else {
                prop_assert!(decided[task].is_none());
            }
        }
    }

    #[test]
    fn store_round_trips_every_artifact(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let store = ProjectStore::open(dir.path()).unwrap();
        let p = profile(seed);
        let slug = p.slug();
        let g = Gateway::mock();
        let life = forge_story(&p, &ForgeConfig::default().with_iterations(2), &g, &mut AutoApprove, seed).unwrap();
        let memory = build_long_term_memory(&life.text, &p, &g, &BuildConfig::default()).unwrap();
        let q = questionnaire(seed);
        let replies: Vec<String> = q.items.iter().map(|i| format!("The answer is {}.", i.answer_key.spoken())).collect();
        let score = score_self_report(&replies, &q).unwrap();
        let mut ps: Vec<Box<dyn Simulacrum>> = vec![Box::new(PromptSimulacrum::new(g.clone(), p.clone(), "bio").with_scenario(Some("resolute".into())))];
        let conformity = run_experiment(&mut ps, &TrialSuite::bundled(), g.templates(), Condition::Group, true).unwrap();

        macro_rules! round_trip {
            ($kind:expr, $value:expr, $ty:ty) => {{
                store.save_artifact(&slug, $kind, seed, &$value).unwrap();
                let back = store.load_artifact::<$ty>(&slug, $kind).unwrap().unwrap();
                prop_assert_eq!(back.seed, seed);
                prop_assert_eq!(&back.data, &$value);
            }};
        }
        round_trip!(ArtifactKind::Profile, p, CharacterProfile);
        round_trip!(ArtifactKind::Biography, life.biography.clone(), simulacra_core::story::Biography);
        round_trip!(ArtifactKind::Story, life, simulacra_core::story::LifeStory);
        round_trip!(ArtifactKind::Memory, memory, simulacra_core::macm::LongTermStore);
        round_trip!(ArtifactKind::Questionnaire, q, Questionnaire);
        round_trip!(ArtifactKind::SelfReport, score, simulacra_core::eval::SelfReportScore);
        round_trip!(ArtifactKind::Conformity, conformity, simulacra_core::conformity::ExperimentReport);

        for r in &life.iterations {
            store.append_journal(&slug, r).unwrap();
            store.append_journal(&slug, r).unwrap();
        }
        prop_assert_eq!(&store.load_journal(&slug).unwrap(), &life.iterations);
    }
}
