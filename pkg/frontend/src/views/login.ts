/** Sign-in and the forced temporary-password rotation. */

import { AccountInfo, ApiClient, ApiError } from '../api.js';
import { clear, h } from '../dom.js';

export function renderLogin(
    container: HTMLElement,
    api: ApiClient,
    onLoggedIn: (account: AccountInfo) => void,
): void {
    clear(container);
    const message = h('div', { class: 'banner error', hidden: true, 'data-role': 'login-error' });
    const form = h(
        'form',
        { 'data-view': 'login' },
        h('label', {}, 'Username', h('input', { name: 'username', autocomplete: 'username' })),
        h(
            'label',
            {},
            'Password',
            h('input', { name: 'password', type: 'password', autocomplete: 'current-password' }),
        ),
        h('button', { type: 'submit' }, 'Sign in'),
    );
    form.addEventListener('submit', (event) => {
        event.preventDefault();
        const data = new FormData(form);
        message.hidden = true;
        void api
            .login(String(data.get('username') ?? ''), String(data.get('password') ?? ''))
            .then((result) => onLoggedIn(result.account))
            .catch((err: unknown) => {
                message.hidden = false;
                if (err instanceof ApiError && err.status === 423) {
                    message.textContent =
                        'This account is locked after repeated failures; ask your coordinator for a reset.';
                } else if (err instanceof ApiError && err.status === 401) {
                    message.textContent = 'Invalid username or password.';
                } else {
                    message.textContent = 'Could not reach the service; please retry.';
                }
            });
    });
    container.append(h('h1', {}, 'Portal sign-in'), message, form);
}

export function renderChangePassword(
    container: HTMLElement,
    api: ApiClient,
    account: AccountInfo,
    onRotated: (account: AccountInfo) => void,
): void {
    clear(container);
    const message = h('div', { class: 'banner error', hidden: true, 'data-role': 'rotate-error' });
    const form = h(
        'form',
        { 'data-view': 'change-password' },
        h(
            'p',
            {},
            account.must_change_password
                ? 'Your temporary password must be replaced before you can continue.'
                : 'Choose a new password.',
        ),
        h(
            'label',
            {},
            'Current password',
            h('input', { name: 'old_password', type: 'password', autocomplete: 'current-password' }),
        ),
        h(
            'label',
            {},
            'New password (at least 8 characters)',
            h('input', { name: 'new_password', type: 'password', autocomplete: 'new-password' }),
        ),
        h('button', { type: 'submit' }, 'Set new password'),
    );
    form.addEventListener('submit', (event) => {
        event.preventDefault();
        const data = new FormData(form);
        message.hidden = true;
        void api
            .changePassword(
                String(data.get('old_password') ?? ''),
                String(data.get('new_password') ?? ''),
            )
            .then((result) => onRotated(result.account))
            .catch((err: unknown) => {
                message.hidden = false;
                message.textContent =
                    err instanceof ApiError ? err.body.message : 'Could not reach the service.';
            });
    });
    container.append(h('h1', {}, 'Change password'), message, form);
}
