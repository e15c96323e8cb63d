/* tslint:disable */
/* eslint-disable */

/**
 * A 1-D ensemble on the two-branch sine data, kept alive between calls.
 */
export class Ensemble1d {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Member means, mixture median and 5–95% band on an even grid over `[0, 1]`.
     */
    curves(grid: number): string;
    constructor(n: number, members: number, eta: number, seed: bigint);
    /**
     * Mixture density, member components, HPD region and mode count at `x`.
     */
    predictive(x: number, level: number): string;
    readonly size: number;
}

/**
 * Partition `n` clustered points in the unit square.
 *
 * Returns `{points, cells: [{lower, upper, count, oversize}], edges}`.
 */
export function partitionDemo(n: number, n_min: number, n_max: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_ensemble1d_free: (a: number, b: number) => void;
    readonly ensemble1d_curves: (a: number, b: number) => [number, number, number, number];
    readonly ensemble1d_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly ensemble1d_predictive: (a: number, b: number, c: number) => [number, number, number, number];
    readonly ensemble1d_size: (a: number) => number;
    readonly partitionDemo: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
