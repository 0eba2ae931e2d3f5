/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Renders an altered copy of the class (see [`Demo::altered`]).
     */
    alter(class_id: number, shift: number, scale: number, width: number): Float32Array;
    /**
     * Nearest ideal class of an arbitrary spectrum of `n_datapoints` values.
     */
    classify(spectrum: Float32Array): Verdict;
    /**
     * Ideal spectrum at the test width, normalized to a maximum of 1.
     */
    ideal(class_id: number): Float32Array;
    /**
     * Samples a 50-class, 1000-datapoint dataset config from `seed`.
     */
    constructor(seed: bigint);
    /**
     * Peak positions of the ideal fingerprint.
     */
    peak_positions(class_id: number): Float64Array;
    /**
     * The nine test-grid spectra of the class, row after row.
     */
    test_grid(class_id: number): Float32Array;
    /**
     * The first `count` training variants of the class, row after row.
     */
    training_variants(class_id: number, count: number): Float32Array;
    readonly n_classes: number;
    readonly n_datapoints: number;
}

/**
 * Oracle verdict for one spectrum.
 */
export class Verdict {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    class_id: number;
    lag: number;
    runner_up_similarity: number;
    /**
     * `-1` when the dataset has a single class.
     */
    runner_up: number;
    similarity: number;
    tie: boolean;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly __wbg_get_verdict_class_id: (a: number) => number;
    readonly __wbg_get_verdict_lag: (a: number) => number;
    readonly __wbg_get_verdict_runner_up: (a: number) => number;
    readonly __wbg_get_verdict_runner_up_similarity: (a: number) => number;
    readonly __wbg_get_verdict_similarity: (a: number) => number;
    readonly __wbg_get_verdict_tie: (a: number) => number;
    readonly __wbg_set_verdict_class_id: (a: number, b: number) => void;
    readonly __wbg_set_verdict_lag: (a: number, b: number) => void;
    readonly __wbg_set_verdict_runner_up: (a: number, b: number) => void;
    readonly __wbg_set_verdict_runner_up_similarity: (a: number, b: number) => void;
    readonly __wbg_set_verdict_similarity: (a: number, b: number) => void;
    readonly __wbg_set_verdict_tie: (a: number, b: number) => void;
    readonly __wbg_verdict_free: (a: number, b: number) => void;
    readonly demo_alter: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_classify: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_ideal: (a: number, b: number) => [number, number, number, number];
    readonly demo_n_classes: (a: number) => number;
    readonly demo_n_datapoints: (a: number) => number;
    readonly demo_new: (a: bigint) => [number, number, number];
    readonly demo_peak_positions: (a: number, b: number) => [number, number, number, number];
    readonly demo_test_grid: (a: number, b: number) => [number, number, number, number];
    readonly demo_training_variants: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
