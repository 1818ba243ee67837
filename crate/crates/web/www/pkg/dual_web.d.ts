/* tslint:disable */
/* eslint-disable */

/**
 * Rejection rates of DUAL and the plain aggregated variant over a few sizes.
 */
export function power_curve(dataset: string, ns: string, alt: boolean, trials: number, c: number, epochs: number, lr: number, seed: bigint): string;

/**
 * Points of one generated dataset: BLOB gives the two samples, `indep`
 * gives the first coordinate of `x` against the first of `y`.
 */
export function sample_points(dataset: string, n: number, alt: boolean, seed: bigint): string;

/**
 * Train a pool on one split and test on the other.
 */
export function single_test(dataset: string, n: number, alt: boolean, c: number, epochs: number, lr: number, bootstrap: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly power_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: bigint) => [number, number];
    readonly sample_points: (a: number, b: number, c: number, d: number, e: bigint) => [number, number];
    readonly single_test: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
