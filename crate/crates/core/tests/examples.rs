//! Every example runs to completion.

macro_rules! example {
    ($module:ident, $file:literal, $test:ident) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(channel_zoo, "channel_zoo.rs", channel_zoo_runs);
example!(code_fidelity, "code_fidelity.rs", code_fidelity_runs);
example!(one_shot_bounds, "one_shot_bounds.rs", one_shot_bounds_runs);
example!(strong_converse, "strong_converse.rs", strong_converse_runs);
example!(entanglement_combing, "entanglement_combing.rs", entanglement_combing_runs);
example!(explicit_codes, "explicit_codes.rs", explicit_codes_runs);
example!(custom_sdp, "custom_sdp.rs", custom_sdp_runs);
