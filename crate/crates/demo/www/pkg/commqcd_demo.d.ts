/* tslint:disable */
/* eslint-disable */

/**
 * Detector statistic along one simulated codeword.
 */
export class TraceData {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[i0, W0, i1, W1, ...]` at subblock ends.
     */
    readonly points: Float64Array;
    /**
     * Alarm index, `n + 1` if none.
     */
    readonly stop: number;
}

export function binaryRegion(eps: number, eps0: number, eps1: number): Float64Array;

export function mimoRegion(power: number, g_diff: Float64Array, g_comm: Float64Array, knots: number): Float64Array;

export function scsTrace(eps0: number, eps1: number, l: number, subblocks: number, threshold: number, nu: number, seed: bigint): TraceData;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_tracedata_free: (a: number, b: number) => void;
    readonly binaryRegion: (a: number, b: number, c: number) => [number, number, number, number];
    readonly mimoRegion: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly scsTrace: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
    readonly tracedata_points: (a: number) => [number, number];
    readonly tracedata_stop: (a: number) => number;
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
