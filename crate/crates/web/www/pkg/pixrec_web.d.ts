/* tslint:disable */
/* eslint-disable */

/**
 * A rendered glyph, its bicubic downsample and two upsamples of that
 * downsample, with their consistency scores.
 */
export class ResampleDemo {
    free(): void;
    [Symbol.dispose](): void;
    bicubic(): Uint8Array;
    consistency_bicubic(): number;
    consistency_nearest(): number;
    consistency_truth(): number;
    high(): Uint8Array;
    low(): Uint8Array;
    low_size(): number;
    nearest(): Uint8Array;
    constructor(digit: number, seed: bigint, size: number, factor: number, levels: number);
    size(): number;
}

/**
 * Which `(ky, kx, input channel)` taps feed output channel group `group`
 * of a masked `kernel x kernel` convolution over `channels` color channels.
 * Row-major over `ky, kx, c`; 1 = connected.
 */
export function mask_pattern(kind_a: boolean, kernel: number, channels: number, group: number): Uint8Array;

/**
 * Histogram of `draws` samples from the tempered distribution, using the
 * sampler's own uniform stream.
 */
export function sample_counts(p: Float64Array, tau: number, seed: bigint, draws: number): Uint32Array;

/**
 * `p^(1/tau)` renormalised.
 */
export function tempered(p: Float64Array, tau: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_resampledemo_free: (a: number, b: number) => void;
    readonly mask_pattern: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly resampledemo_bicubic: (a: number) => [number, number];
    readonly resampledemo_consistency_bicubic: (a: number) => number;
    readonly resampledemo_consistency_nearest: (a: number) => number;
    readonly resampledemo_consistency_truth: (a: number) => number;
    readonly resampledemo_high: (a: number) => [number, number];
    readonly resampledemo_low: (a: number) => [number, number];
    readonly resampledemo_low_size: (a: number) => number;
    readonly resampledemo_nearest: (a: number) => [number, number];
    readonly resampledemo_new: (a: number, b: bigint, c: number, d: number, e: number) => [number, number, number];
    readonly resampledemo_size: (a: number) => number;
    readonly sample_counts: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number, number];
    readonly tempered: (a: number, b: number, c: number) => [number, number, number, number];
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
