/* tslint:disable */
/* eslint-disable */

/**
 * A trained toy model whose sampler paths can be drawn.
 */
export class ToyDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Metrics trace as JSON lines.
     */
    metrics(): string;
    /**
     * Trains with the default config except for `steps`, `lambda` and `seed`.
     */
    constructor(steps: number, lambda: number, seed: bigint);
    /**
     * JSON array of `n` sampler paths for direction `s` (sign taken) and
     * frame flag; each path lists the state after every Euler step.
     */
    paths(s: number, base_frame: boolean, n: number, steps: number): string;
}

export function decode_action(text: string, frame: string): string;

export function encode_delta(json: string): string;

/**
 * Attention mask as rows of `0`/`1`.
 */
export function mask_grid(prefix: number, lang: number, act: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_toydemo_free: (a: number, b: number) => void;
    readonly decode_action: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly encode_delta: (a: number, b: number) => [number, number, number, number];
    readonly mask_grid: (a: number, b: number, c: number) => [number, number, number, number];
    readonly toydemo_metrics: (a: number) => [number, number];
    readonly toydemo_new: (a: number, b: number, c: bigint) => [number, number, number];
    readonly toydemo_paths: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
