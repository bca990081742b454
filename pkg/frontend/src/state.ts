/**
 * View-state machine for the portal.
 *
 * Views that require a session are unreachable without one, and an
 * account still carrying a temporary password is pinned to the
 * change-password view until it rotates. Navigation always flows through
 * `navigate`, which enforces both rules.
 */

import type { AccountInfo } from './api.js';

export type View =
    | 'SELF_CHECK'
    | 'LOGIN'
    | 'CHANGE_PASSWORD'
    | 'ENROLLMENT_WIZARD'
    | 'COORDINATOR_DASHBOARD'
    | 'PATIENT_DETAIL'
    | 'ADMIN';

const PUBLIC_VIEWS: ReadonlySet<View> = new Set(['SELF_CHECK', 'LOGIN']);

export interface ViewState {
    activeView: View;
    account: AccountInfo | null;
    selectedPatientId: string | null;
}

export function initialState(): ViewState {
    return { activeView: 'SELF_CHECK', account: null, selectedPatientId: null };
}

export function homeViewFor(account: AccountInfo): View {
    if (account.must_change_password) return 'CHANGE_PASSWORD';
    switch (account.role) {
        case 'PATIENT':
            return 'ENROLLMENT_WIZARD';
        case 'COORDINATOR':
        case 'INVESTIGATOR':
            return 'COORDINATOR_DASHBOARD';
        case 'RESEARCHER':
        case 'DCC_ADMIN':
            return 'ADMIN';
    }
}

/** Resolve a navigation request against the session rules. */
export function navigate(state: ViewState, target: View): ViewState {
    if (!PUBLIC_VIEWS.has(target)) {
        if (state.account === null) {
            return { ...state, activeView: 'LOGIN' };
        }
        if (state.account.must_change_password && target !== 'CHANGE_PASSWORD') {
            return { ...state, activeView: 'CHANGE_PASSWORD' };
        }
    }
    return { ...state, activeView: target };
}

export function loggedIn(state: ViewState, account: AccountInfo): ViewState {
    return navigate({ ...state, account }, homeViewFor(account));
}

export function loggedOut(state: ViewState): ViewState {
    return { activeView: 'LOGIN', account: null, selectedPatientId: null };
}
