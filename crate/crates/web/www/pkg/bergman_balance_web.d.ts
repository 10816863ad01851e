/* tslint:disable */
/* eslint-disable */

/**
 * Bergman function and FS potential of `H_t = exp(−2t·diag(eigenvalues))`
 * on the line, against `cos θ` (the forms are rotation invariant).
 */
export function bergman_profile(m: number, eigenvalues: Float64Array, t: number, resolution: number): string;

/**
 * `δₘ` upper bounds for `m = 1..=m_max`. `polytope` is a name (`p2`,
 * `p1xp1`, `bl1p2`, `p1`) or a vertex list, one vertex per line.
 */
export function delta_table(polytope: string, m_max: number, bound: number): string;

/**
 * `ℒ`, `ℰₘ`, `𝒟ₘ` and their `t`-derivatives along the geodesic of a diagonal
 * generator, at `steps + 1` equally spaced times in `[0, t_max]`.
 */
export function slope_curve(m: number, eigenvalues: Float64Array, t_max: number, steps: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bergman_profile: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly delta_table: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly slope_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
