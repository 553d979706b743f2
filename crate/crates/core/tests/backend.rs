mod mock {
    use llmopt_core::backend::parse_candidates;
    use llmopt_core::backend::*;
    use llmopt_core::problem::{CirclePackingConfig, CirclePackingProblem, Problem};
    use std::sync::Arc;

    fn problem() -> CirclePackingProblem {
        CirclePackingProblem::new(CirclePackingConfig::default())
    }

    fn backend() -> MockBackend {
        MockBackend::new(7, Arc::new(problem()))
    }

    fn request(prompt: &str, k: usize) -> BackendRequest {
        let parent = "centers = np.array([[0.2, 0.2], [0.8, 0.2], [0.2, 0.8], [0.8, 0.8]])\nradii = np.array([0.1, 0.1, 0.1, 0.1])";
        BackendRequest {
            role: CallRole::Optimizer,
            system: "sys".into(),
            prompt: prompt.into(),
            context: RequestContext::Variation {
                parents: vec![parent.into()],
                k,
            },
        }
    }

    #[test]
    fn same_prompt_same_reply() {
        let b = backend();
        let a = b.complete(&request("p", 3)).unwrap();
        let c = b.complete(&request("p", 3)).unwrap();
        assert_eq!(a.raw_text, c.raw_text);
        assert_ne!(a.raw_text, b.complete(&request("q", 3)).unwrap().raw_text);
    }

    #[test]
    fn replies_parse_into_k_decodable_candidates() {
        let b = backend();
        let reply = b.complete(&request("p", 4)).unwrap();
        let parsed = parse_candidates(&reply.raw_text, 4);
        assert_eq!(parsed.candidates.len(), 4);
        for c in &parsed.candidates {
            assert!(problem().decode(c).is_ok());
        }
    }

    #[test]
    fn malformed_replies_lose_a_candidate() {
        let b = backend().with_malformed_rate(1.0);
        let reply = b.complete(&request("p", 2)).unwrap();
        let parsed = parse_candidates(&reply.raw_text, 2);
        assert_eq!(parsed.candidates.len(), 1);
        assert_eq!(parsed.diagnostics.len(), 1);
    }

    #[test]
    fn summarizer_mentions_ids() {
        let b = backend();
        let req = BackendRequest {
            role: CallRole::Summarizer,
            system: String::new(),
            prompt: String::new(),
            context: RequestContext::Summary {
                good: vec![3, 5],
                bad: vec![9],
                prior_version: 0,
            },
        };
        let text = b.complete(&req).unwrap().raw_text;
        assert!(text.contains("#3, #5") && text.contains("#9"));
    }
}

mod remote {
    use llmopt_core::backend::*;
    use llmopt_core::backend::{CallRole, RequestContext};
    use serde_json::{json, Value};
    use std::sync::Mutex;
    use std::time::Duration;

    struct Scripted {
        replies: Mutex<Vec<Result<(u16, String), TransportError>>>,
        seen: Mutex<Vec<Value>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<(u16, String), TransportError>>) -> Self {
            replies.reverse();
            Self {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl ChatTransport for &'static Scripted {
        fn post_json(
            &self,
            _: &str,
            _: &str,
            body: &Value,
        ) -> Result<(u16, String), TransportError> {
            self.seen.lock().unwrap().push(body.clone());
            self.replies
                .lock()
                .unwrap()
                .pop()
                .expect("script exhausted")
        }
    }

    fn ok_body(text: &str) -> String {
        json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7},
        })
        .to_string()
    }

    fn request() -> BackendRequest {
        BackendRequest {
            role: CallRole::Optimizer,
            system: "sys".into(),
            prompt: "user".into(),
            context: RequestContext::Variation {
                parents: vec![],
                k: 2,
            },
        }
    }

    fn backend(
        script: Vec<Result<(u16, String), TransportError>>,
    ) -> (RemoteBackend, &'static Scripted) {
        let s: &'static Scripted = Box::leak(Box::new(Scripted::new(script)));
        let b = RemoteBackend::with_transport(RemoteConfig::default(), "k".into(), Box::new(s))
            .with_sleep(|_| {});
        (b, s)
    }

    #[test]
    fn rate_limit_then_success() {
        let (b, _) = backend(vec![
            Ok((429, String::new())),
            Ok((200, ok_body("<candidate>x</candidate>"))),
        ]);
        let reply = b.complete(&request()).unwrap();
        assert_eq!(reply.attempts, 2);
        assert_eq!(reply.raw_text, "<candidate>x</candidate>");
        assert_eq!(
            reply.usage,
            Some(Usage {
                input_tokens: 11,
                output_tokens: 7
            })
        );
    }

    #[test]
    fn unauthorized_is_fatal() {
        let (b, _) = backend(vec![Ok((401, "{}".into()))]);
        let err = b.complete(&request()).unwrap_err();
        assert!(err.is_fatal());
    }

    #[test]
    fn retries_are_capped() {
        let mut script = Vec::new();
        for _ in 0..5 {
            script.push(Err(TransportError::Timeout));
        }
        let (b, s) = backend(script);
        let err = b.complete(&request()).unwrap_err();
        assert!(matches!(
            err,
            BackendError::RetriesExhausted { attempts: 5, .. }
        ));
        assert_eq!(s.seen.lock().unwrap().len(), 5);
    }

    #[test]
    fn payload_carries_messages() {
        let (b, s) = backend(vec![Ok((200, ok_body("hi")))]);
        b.complete(&request()).unwrap();
        let sent = &s.seen.lock().unwrap()[0];
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["content"], "user");
        assert_eq!(sent["model"], "gpt-4o-2024-05-13");
    }

    #[test]
    fn malformed_success_body() {
        let (b, _) = backend(vec![Ok((200, "not json".into()))]);
        assert!(matches!(
            b.complete(&request()),
            Err(BackendError::InvalidResponse(_))
        ));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            attempts: 5,
            base_delay_ms: 100,
            max_delay_ms: 350,
        };
        assert_eq!(p.delay(1), Duration::from_millis(100));
        assert_eq!(p.delay(2), Duration::from_millis(200));
        assert_eq!(p.delay(3), Duration::from_millis(350));
    }
}

mod template {
    use llmopt_core::backend::*;
    use llmopt_core::error::Error;
    use llmopt_core::objective::ObjectiveSpec;

    fn template() -> TaskTemplate {
        TaskTemplate {
            task_description: "Improve things.".into(),
            output_format: "<candidate>x</candidate>".into(),
            mutation_instruction: String::new(),
            crossover_instruction: String::new(),
            additional_requirements: String::new(),
            objective_descriptions: vec![ObjectiveDescription {
                name: "score".into(),
                description: "higher is better".into(),
            }],
        }
    }

    #[test]
    fn accepts_well_formed_template() {
        template()
            .validate(&[ObjectiveSpec::maximize("score")])
            .unwrap();
    }

    #[test]
    fn rejects_missing_tags() {
        let mut t = template();
        t.output_format = "just write it".into();
        assert!(matches!(
            t.validate(&[ObjectiveSpec::maximize("score")]),
            Err(Error::Template(_))
        ));
    }

    #[test]
    fn rejects_unknown_objective_description() {
        assert!(template()
            .validate(&[ObjectiveSpec::maximize("other")])
            .is_err());
    }
}

mod prompt {
    use llmopt_core::backend::*;
    use llmopt_core::objective::ObjectiveSpec;

    fn template() -> TaskTemplate {
        TaskTemplate {
            task_description: "Pack circles.".into(),
            output_format: "<candidate>...</candidate>".into(),
            mutation_instruction: "MUTATE-HINT".into(),
            crossover_instruction: "CROSS-HINT".into(),
            additional_requirements: "Stay inside.".into(),
            objective_descriptions: vec![ObjectiveDescription {
                name: "radii".into(),
                description: "sum of radii".into(),
            }],
        }
    }

    fn parent(t: &str) -> ParentBlock {
        ParentBlock {
            text: t.into(),
            feedback: "objectives:\n  radii: 0.5".into(),
        }
    }

    #[test]
    fn mutation_gates_sections() {
        let objs = [ObjectiveSpec::maximize("radii")];
        let b = build_prompt(
            &template(),
            &objs,
            JobKind::Mutation,
            &[parent("p1")],
            None,
            2,
        );
        assert!(b.body.contains("MUTATE-HINT"));
        assert!(!b.body.contains("CROSS-HINT"));
        assert!(b.body.contains("Propose exactly 2 new candidates"));
        assert!(!b.body.contains("## Experience"));
    }

    #[test]
    fn crossover_shows_two_parents() {
        let objs = [ObjectiveSpec::maximize("radii")];
        let b = build_prompt(
            &template(),
            &objs,
            JobKind::Crossover,
            &[parent("p1"), parent("p2")],
            None,
            1,
        );
        assert!(b.body.contains("CROSS-HINT"));
        assert!(b.body.contains("### Parent 2"));
        assert!(b.body.contains("Propose exactly 1 new candidate."));
    }

    #[test]
    fn experience_appears_once() {
        let objs = [ObjectiveSpec::maximize("radii")];
        let memo = "Keep circles near corners; avoid tiny radii.";
        let b = build_prompt(
            &template(),
            &objs,
            JobKind::Mutation,
            &[parent("p1")],
            Some(memo),
            2,
        );
        assert_eq!(b.body.matches(memo).count(), 1);
        assert_eq!(b.body.matches("## Experience").count(), 1);
    }

    #[test]
    fn section_order_is_fixed() {
        let objs = [ObjectiveSpec::maximize("radii")];
        let b = build_prompt(
            &template(),
            &objs,
            JobKind::Mutation,
            &[parent("p1")],
            Some("memo"),
            2,
        );
        let order = [
            "## Task Description",
            "## Objectives",
            "## Parent Candidates",
            "## Mutation Instruction",
            "## Additional Requirements",
            "## Experience",
            "## Output Format",
        ];
        let positions: Vec<usize> = order.iter().map(|h| b.body.find(h).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deterministic() {
        let objs = [ObjectiveSpec::maximize("radii")];
        let a = build_prompt(
            &template(),
            &objs,
            JobKind::Mutation,
            &[parent("p1")],
            Some("m"),
            2,
        );
        let b = build_prompt(
            &template(),
            &objs,
            JobKind::Mutation,
            &[parent("p1")],
            Some("m"),
            2,
        );
        assert_eq!(a, b);
    }

    #[test]
    #[should_panic]
    fn wrong_parent_count_panics() {
        build_prompt(
            &template(),
            &[],
            JobKind::Crossover,
            &[parent("p1")],
            None,
            1,
        );
    }
}

mod parse {
    use llmopt_core::backend::*;
    use proptest::prelude::*;

    #[test]
    fn single_tag() {
        let out = parse_candidates("<candidate>c1ccccc1</candidate>", 1);
        assert_eq!(out.candidates, vec!["c1ccccc1"]);
        assert!(out.diagnostics.is_empty());
        assert!(!out.count_mismatch());
    }

    #[test]
    fn two_tags_in_order_with_whitespace() {
        let out = parse_candidates(
            "Sure!\n<candidate>\n  CCO \n</candidate> and <candidate>CCN</candidate>",
            2,
        );
        assert_eq!(out.candidates, vec!["CCO", "CCN"]);
    }

    #[test]
    fn unterminated_gives_one_diagnostic() {
        let out = parse_candidates("<candidate>abc", 1);
        assert!(out.candidates.is_empty());
        assert_eq!(
            out.diagnostics,
            vec![ParseDiagnostic::Unterminated { offset: 0 }]
        );
    }

    #[test]
    fn nested_open_recovers_inner_pair() {
        let out = parse_candidates("<candidate>a<candidate>b</candidate>", 1);
        assert_eq!(out.candidates, vec!["b"]);
        assert_eq!(out.diagnostics, vec![ParseDiagnostic::Nested { offset: 0 }]);
    }

    #[test]
    fn stray_close_and_empty() {
        let out = parse_candidates("</candidate><candidate>  </candidate>", 2);
        assert!(out.candidates.is_empty());
        assert_eq!(out.diagnostics.len(), 2);
        assert!(out.count_mismatch());
    }

    #[test]
    fn more_than_expected_is_kept() {
        let out = parse_candidates(
            "<candidate>a</candidate><candidate>b</candidate><candidate>c</candidate>",
            2,
        );
        assert_eq!(out.candidates.len(), 3);
        assert!(out.count_mismatch());
    }

    proptest! {
        #[test]
        fn never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            let s = String::from_utf8_lossy(&bytes);
            let _ = parse_candidates(&s, 2);
        }

        #[test]
        fn tag_soup_never_panics(parts in prop::collection::vec(prop_oneof![
            Just("<candidate>".to_string()),
            Just("</candidate>".to_string()),
            Just("<candid".to_string()),
            "[a-z é]{0,4}",
        ], 0..20)) {
            let s: String = parts.concat();
            let out = parse_candidates(&s, 1);
            for c in &out.candidates {
                prop_assert!(!c.contains(OPEN_TAG));
            }
        }
    }
}
