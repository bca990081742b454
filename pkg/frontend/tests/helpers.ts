/**
 * Test harness: boots the real coordinating-center service and drives the
 * portal UI against it. Setup uses only the service's external interfaces
 * (the admin CLI offline, then the HTTP API).
 */

import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { createServer } from 'node:net';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { PortalApp, bootstrap } from '../src/app.js';

export const STAFF_PASSWORD = 'portal-staff-pw-1';

export interface TestServer {
    baseUrl: string;
    dataDir: string;
    mailPath: string;
    siteA: string;
    siteB: string;
    stop(): Promise<void>;
}

function cli(dataDir: string, args: string[]): Record<string, unknown> {
    const result = spawnSync('trialdcc', ['--data-dir', dataDir, '--json', ...args], {
        encoding: 'utf-8',
    });
    if (result.status !== 0) {
        throw new Error(`cli ${args.join(' ')} failed: ${result.stderr || result.stdout}`);
    }
    return JSON.parse(result.stdout) as Record<string, unknown>;
}

async function freePort(): Promise<number> {
    return new Promise((resolve, reject) => {
        const probe = createServer();
        probe.once('error', reject);
        probe.listen(0, '127.0.0.1', () => {
            const address = probe.address();
            if (address === null || typeof address === 'string') {
                reject(new Error('no port'));
                return;
            }
            const port = address.port;
            probe.close(() => resolve(port));
        });
    });
}

async function rotateStaffPassword(
    baseUrl: string,
    username: string,
    tempPassword: string,
): Promise<void> {
    const login = await fetch(`${baseUrl}/api/v1/auth/login`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ username, password: tempPassword }),
    });
    if (!login.ok) throw new Error(`login for ${username} failed: ${await login.text()}`);
    const { token } = (await login.json()) as { token: string };
    const rotate = await fetch(`${baseUrl}/api/v1/auth/password`, {
        method: 'POST',
        headers: {
            'Content-Type': 'application/json',
            Authorization: `Bearer ${token}`,
        },
        body: JSON.stringify({ old_password: tempPassword, new_password: STAFF_PASSWORD }),
    });
    if (!rotate.ok) throw new Error(`rotation for ${username} failed: ${await rotate.text()}`);
}

export async function startServer(): Promise<TestServer> {
    const dataDir = mkdtempSync(join(tmpdir(), 'portal-ui-'));
    const mailPath = join(dataDir, 'notifications.jsonl');

    cli(dataDir, ['user', 'add', '--username', 'root', '--role', 'DCC_ADMIN']);
    const siteA = cli(dataDir, ['--actor', 'root', 'site', 'add', '--name', 'Site A',
        '--contact', 'coord-a@example.org'])['site_id'] as string;
    const siteB = cli(dataDir, ['--actor', 'root', 'site', 'add', '--name', 'Site B',
        '--contact', 'coord-b@example.org'])['site_id'] as string;
    const tempPasswords = new Map<string, string>();
    for (const [username, role, site] of [
        ['coord-a', 'COORDINATOR', siteA],
        ['coord-b', 'COORDINATOR', siteB],
        ['inv-a', 'INVESTIGATOR', siteA],
    ] as const) {
        const added = cli(dataDir, ['--actor', 'root', 'user', 'add', '--username', username,
            '--role', role, '--site', site]);
        tempPasswords.set(username, added['temporary_password'] as string);
    }

    const port = await freePort();
    const baseUrl = `http://127.0.0.1:${port}`;
    const child: ChildProcess = spawn(
        'trialdcc',
        ['serve', '--listen', `127.0.0.1:${port}`, '--data-dir', dataDir,
            '--allow-insecure-local', '--notify-log', mailPath, '--drain-interval', '0.2'],
        { stdio: ['ignore', 'pipe', 'pipe'] },
    );
    const stderrChunks: string[] = [];
    child.stderr?.on('data', (chunk: Buffer) => stderrChunks.push(chunk.toString()));

    const deadline = Date.now() + 30_000;
    for (;;) {
        if (child.exitCode !== null) {
            throw new Error(`server exited early: ${stderrChunks.join('')}`);
        }
        try {
            const health = await fetch(`${baseUrl}/healthz`);
            if (health.ok) break;
        } catch {
            // keep polling
        }
        if (Date.now() > deadline) {
            child.kill('SIGKILL');
            throw new Error(`server never became healthy: ${stderrChunks.join('')}`);
        }
        await sleep(100);
    }

    for (const [username, temp] of tempPasswords) {
        await rotateStaffPassword(baseUrl, username, temp);
    }

    return {
        baseUrl,
        dataDir,
        mailPath,
        siteA,
        siteB,
        async stop() {
            child.kill('SIGTERM');
            await new Promise<void>((resolve) => {
                const timer = setTimeout(() => {
                    child.kill('SIGKILL');
                    resolve();
                }, 5_000);
                child.once('exit', () => {
                    clearTimeout(timer);
                    resolve();
                });
            });
        },
    };
}

export function sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Poll until the probe stops throwing (DOM settles after async work). */
export async function waitFor<T>(probe: () => T, timeoutMs = 10_000): Promise<T> {
    const deadline = Date.now() + timeoutMs;
    let lastError: unknown = new Error('waitFor: never ran');
    for (;;) {
        try {
            return probe();
        } catch (err) {
            lastError = err;
        }
        if (Date.now() > deadline) throw lastError;
        await sleep(25);
    }
}

export function mountApp(baseUrl: string): { app: PortalApp; root: HTMLElement } {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById('app') as HTMLElement;
    const app = bootstrap(root, baseUrl);
    return { app, root };
}

export function q<T extends Element>(root: ParentNode, selector: string): T {
    const el = root.querySelector(selector);
    if (!el) throw new Error(`missing element ${selector}`);
    return el as T;
}

export function setValue(root: ParentNode, name: string, value: string): void {
    const el = q<HTMLInputElement | HTMLSelectElement>(root, `[name="${name}"]`);
    el.value = value;
}

export function submitForm(root: ParentNode, selector: string): void {
    const form = q<HTMLFormElement>(root, selector);
    form.dispatchEvent(new window.Event('submit', { bubbles: true, cancelable: true }));
}

export function click(root: ParentNode, selector: string): void {
    q<HTMLElement>(root, selector).click();
}

/** Sign the app in through the real login view, navigating to it first. */
export async function loginViaUi(root: HTMLElement, username: string, password: string) {
    if (!root.querySelector('[data-view="login"]')) {
        const nav = root.querySelector<HTMLElement>('[data-nav="LOGIN"]');
        nav?.click();
    }
    await waitFor(() => q(root, '[data-view="login"]'));
    setValue(root, 'username', username);
    setValue(root, 'password', password);
    submitForm(root, '[data-view="login"]');
}

export interface ApiSession {
    token: string;
    account: Record<string, unknown>;
}

/** Plain-fetch session for test fixtures that need direct API access. */
export async function apiLogin(
    baseUrl: string,
    username: string,
    password: string,
): Promise<ApiSession> {
    const resp = await fetch(`${baseUrl}/api/v1/auth/login`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ username, password }),
    });
    if (!resp.ok) throw new Error(`login failed: ${await resp.text()}`);
    const body = (await resp.json()) as { token: string; account: Record<string, unknown> };
    return { token: body.token, account: body.account };
}

export async function apiCall(
    baseUrl: string,
    session: ApiSession,
    method: string,
    path: string,
    body?: unknown,
): Promise<Record<string, unknown>> {
    const resp = await fetch(`${baseUrl}${path}`, {
        method,
        headers: {
            'Content-Type': 'application/json',
            Authorization: `Bearer ${session.token}`,
        },
        body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const parsed = text ? (JSON.parse(text) as Record<string, unknown>) : {};
    if (!resp.ok) {
        throw new Error(`${method} ${path} -> ${resp.status}: ${text}`);
    }
    return parsed;
}

export const GOOD_INPUTS = {
    dre_palpable: false,
    histology_aggressive: false,
    gleason_score: 6,
    psa_ng_ml: 4.5,
    positive_cores: 2,
    total_cores: 12,
};

export function readMail(mailPath: string): Array<Record<string, unknown>> {
    let text: string;
    try {
        text = readFileSync(mailPath, 'utf-8');
    } catch {
        return [];
    }
    return text
        .trim()
        .split('\n')
        .filter(Boolean)
        .map((line) => JSON.parse(line) as Record<string, unknown>);
}

/** Fill the six criterion fields on any inputs form rendered by the UI. */
export function fillCriterionInputs(scope: ParentNode): void {
    setValue(scope, 'dre_palpable', 'NO');
    setValue(scope, 'histology_aggressive', 'NO');
    setValue(scope, 'gleason_score', '6');
    setValue(scope, 'psa_ng_ml', '4.5');
    setValue(scope, 'positive_cores', '2');
    setValue(scope, 'total_cores', '12');
}
