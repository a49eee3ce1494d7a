/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    codeIds(): string[];
    /**
     * Replaces the networks with a bundle written by `thermosynth train-*`.
     */
    loadBundle(bytes: Uint8Array): void;
    /**
     * Returns the number of codes loaded from a `latents.json`.
     */
    loadLatents(json: string): number;
    constructor(seed: number);
    /**
     * RGBA pixels of the generator output. A negative `code` draws a random
     * code from `seed` instead of using a loaded one.
     */
    render(heatmap: Float32Array, code: number, seed: number): Uint8Array;
    /**
     * Normalised heatmap (values in [-1, 1]) of a person at `center_u`.
     */
    sceneHeatmap(center_u: number, head_v: number, arm: number): Float32Array;
    readonly heatmapHeight: number;
    readonly heatmapWidth: number;
    readonly imageHeight: number;
    readonly imageWidth: number;
}

/**
 * Masked hinge-L1 reconstruction loss between two heatmaps.
 */
export function heatmapLoss(h: Float32Array, h_hat: Float32Array, mask: Float32Array, height: number, width: number, epsilon: number): number;

/**
 * JSON-encoded [`demo::PrivacyView`].
 */
export function privacyView(seed: number, width: number, height: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_codeIds: (a: number) => [number, number];
    readonly demo_heatmapHeight: (a: number) => number;
    readonly demo_heatmapWidth: (a: number) => number;
    readonly demo_imageHeight: (a: number) => number;
    readonly demo_imageWidth: (a: number) => number;
    readonly demo_loadBundle: (a: number, b: number, c: number) => [number, number];
    readonly demo_loadLatents: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_render: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly demo_sceneHeatmap: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly heatmapLoss: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number];
    readonly privacyView: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
